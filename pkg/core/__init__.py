# Core modules for the displacement eigenstate solver
