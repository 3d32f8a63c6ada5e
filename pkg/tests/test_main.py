"""命令行入口的测试"""
import logging
import sys

import pytest

from core.config_manager import ConfigManager
from core.experiment import read_rows
from main import apply_arguments, build_parser, exception_hook, main, setup_logging


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    monkeypatch.setenv('DISPEIG_CONFIG_DIR', str(tmp_path / 'config'))
    monkeypatch.setattr(sys, 'excepthook', sys.excepthook)


def test_arguments_override_config(tmp_path):
    args = build_parser().parse_args(['--experiment', 'gs_site_variance', '--L', '6,8', '--W', '2.5',
                                      '--max-ph', '3', '--label-strategy', 'random(4)',
                                      '--out', str(tmp_path / 'x.csv')])
    manager = ConfigManager(tmp_path / 'none.json')
    apply_arguments(manager, args)
    config = manager.to_experiment_config()
    assert config.experiment == 'gs_site_variance'
    assert config.lengths == (6, 8)
    assert config.disorders == (2.5,)
    assert config.max_particles == 3 and config.max_holes == 3
    assert (config.label_strategy, config.label_count) == ('random', 4)
    assert config.output == tmp_path / 'x.csv'
    # 未给出的参数保持配置值
    assert config.samples == 1


def test_main_runs_and_summarizes(tmp_path):
    out = tmp_path / 'gs.csv'
    assert main(['--L', '4', '--samples', '2', '--out', str(out), '--report']) == 0
    assert len(read_rows(out)) == 6
    summary = tmp_path / 'gs_summary.csv'
    assert summary.exists()
    assert (tmp_path / 'gs_summary.html').exists()

    summary.unlink()
    assert main(['--aggregate', str(out)]) == 0
    assert summary.exists()


def test_main_reports_failures(tmp_path):
    assert main(['--L', '5', '--out', str(tmp_path / 'odd.csv')]) == 1
    assert main(['--label-strategy', 'some']) == 1
    assert main(['--aggregate', str(tmp_path / 'missing.csv')]) == 2


def test_startup_and_uncaught_errors_are_logged(caplog):
    with caplog.at_level(logging.INFO, logger='main'):
        setup_logging('debug')
        try:
            raise RuntimeError('sweep crashed')
        except RuntimeError:
            exception_hook(*sys.exc_info())
    messages = [record.getMessage() for record in caplog.records]
    assert any(message.startswith('求解器启动: numpy') and '日志级别 DEBUG' in message
               for message in messages)
    crash = caplog.records[-1]
    assert crash.levelno == logging.CRITICAL
    assert 'RuntimeError' in crash.getMessage()
    assert crash.exc_info[1].args == ('sweep crashed',)
