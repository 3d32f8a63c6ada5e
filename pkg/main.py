"""
位移变换本征态求解器命令行入口
"""
import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path
from time import perf_counter

import numpy as np
import scipy

from core.config_manager import ConfigManager, parse_scalar
from core.errors import DispEigError
from core.experiment import EXPERIMENTS, aggregate, parse_label_strategy, run
from core.logger_util import log_error
from core.resource_path import get_logs_dir, get_results_dir


def setup_logging(level: str = 'INFO'):
    """日志写入 logs/ 下按日期命名的文件与标准输出，首行记录数值库版本"""
    log_file = get_logs_dir() / f'dispeig_{datetime.now().strftime("%Y%m%d")}.log'
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
        handlers=[
            logging.FileHandler(log_file, encoding='utf-8'),
            logging.StreamHandler(sys.stdout) if sys.stdout else logging.NullHandler()
        ]
    )

    logger = logging.getLogger(__name__)
    logger.info('求解器启动: numpy %s, scipy %s, 日志级别 %s',
                np.__version__, scipy.__version__, level.upper())
    logger.info('日志写入 %s', log_file)
    return logger


def exception_hook(exc_type, exc_value, exc_traceback):
    """未处理的异常写入日志；已完成样本的结果仍在 results/ 下"""
    if issubclass(exc_type, KeyboardInterrupt):
        sys.__excepthook__(exc_type, exc_value, exc_traceback)
        return

    logging.getLogger(__name__).critical(
        '求解中断（%s），结果目录 %s 中可能只有部分样本',
        exc_type.__name__, get_results_dir(),
        exc_info=(exc_type, exc_value, exc_traceback)
    )


def _number_list(text: str) -> list:
    value = parse_scalar(text)
    return value if isinstance(value, list) else [value]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='dispeig',
        description='无序 Hubbard 链的位移变换本征态求解器',
    )
    parser.add_argument('--experiment', choices=EXPERIMENTS, help='实验名称')
    parser.add_argument('--L', type=_number_list, help='格点数，可用逗号分隔多个')
    parser.add_argument('--W', type=_number_list, help='无序强度，可用逗号分隔多个')
    parser.add_argument('--samples', type=int, help='每组参数的样本数')
    parser.add_argument('--seed', type=int, help='基础种子，样本 i 使用 seed + i')
    parser.add_argument('--order', type=_number_list, help='最高阶数，可用逗号分隔多个')
    parser.add_argument('--lambda-cutoff', type=float, help='基态扫描的 λ 截断')
    parser.add_argument('--max-ph', type=int, help='截断时允许的最大粒子与空穴数')
    parser.add_argument('--ci-cap', type=int, help='投影对角化的基矢上限')
    parser.add_argument('--label-strategy', help="激发态标签：all 或 random(k)")
    parser.add_argument('--workers', type=int, help='并行进程数')
    parser.add_argument('--out', type=Path, help='结果 CSV 路径')
    parser.add_argument('--config', type=Path, help='配置文件（JSON 或 key=value）')
    parser.add_argument('--aggregate', type=Path, metavar='RESULT_CSV',
                        help='只汇总已有结果文件，不运行实验')
    parser.add_argument('--report', action='store_true', help='汇总后另外渲染 HTML 报告')
    parser.add_argument('--theme', choices=('light', 'dark'), default='light', help='报告主题')
    parser.add_argument('--log-level', default='INFO', help='日志级别')
    return parser


def apply_arguments(config_manager: ConfigManager, args: argparse.Namespace):
    """命令行参数覆盖配置文件"""
    overrides = {
        'experiment.experiment': args.experiment,
        'experiment.lengths': args.L,
        'experiment.disorders': args.W,
        'experiment.samples': args.samples,
        'experiment.base_seed': args.seed,
        'experiment.orders': args.order,
        'experiment.workers': args.workers,
        'experiment.output': args.out.as_posix() if args.out else None,
        'sweep.lambda_cutoff_ground': args.lambda_cutoff,
        'sweep.max_particles': args.max_ph,
        'sweep.max_holes': args.max_ph,
        'projection.ci_cap': args.ci_cap,
    }
    for key, value in overrides.items():
        if value is not None:
            config_manager.set(key, value)
    if args.label_strategy:
        strategy, count = parse_label_strategy(args.label_strategy)
        config_manager.set('experiment.label_strategy', strategy)
        config_manager.set('experiment.label_count', count)


def _summarize(result_path: Path, report: bool, theme: str, logger: logging.Logger):
    summary_path = aggregate(result_path)
    logger.info('汇总文件: %s', summary_path)
    if report:
        from core.report_renderer import ReportRenderer
        report_path = ReportRenderer().render_summary(summary_path, theme=theme)
        logger.info('报告文件: %s', report_path)


def main(argv=None) -> int:
    """主函数"""
    startup_begin = perf_counter()
    sys.excepthook = exception_hook
    args = build_parser().parse_args(argv)
    logger = setup_logging(args.log_level)

    try:
        if args.aggregate:
            _summarize(args.aggregate, args.report, args.theme, logger)
        else:
            stage_begin = perf_counter()
            config_manager = ConfigManager(args.config) if args.config else ConfigManager()
            apply_arguments(config_manager, args)
            config = config_manager.to_experiment_config()
            logger.info('阶段: 配置加载耗时 %.1f ms', (perf_counter() - stage_begin) * 1000)

            result_path = run(config)
            logger.info('结果文件: %s', result_path)
            _summarize(result_path, args.report, args.theme, logger)
    except DispEigError as e:
        log_error('运行失败', e, logger)
        return 1
    except OSError as e:
        log_error('文件读写失败', e, logger)
        return 2

    logger.info('完成，总耗时 %.1f s', perf_counter() - startup_begin)
    return 0


if __name__ == '__main__':
    sys.exit(main())
