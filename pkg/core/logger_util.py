"""
日志工具模块
提供统一的日志接口，同时支持控制台输出和logging
"""
import logging
import sys
from contextlib import contextmanager
from time import perf_counter
from typing import Iterator, Optional


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    获取日志记录器

    Args:
        name: 日志记录器名称（通常是模块名）

    Returns:
        日志记录器实例
    """
    return logging.getLogger(name or 'dispeig')


def log_error(message: str, exception: Optional[BaseException] = None,
              logger: Optional[logging.Logger] = None):
    """
    记录错误（同时输出到stderr和日志）

    Args:
        message: 错误消息
        exception: 异常对象（可选）
        logger: 日志记录器（可选）
    """
    if logger is None:
        logger = get_logger()

    error_msg = message
    if exception is not None:
        error_msg += f": {exception}"

    print(error_msg, file=sys.stderr)
    logger.error(error_msg, exc_info=exception)


def log_warning(message: str, logger: Optional[logging.Logger] = None):
    """记录警告（同时输出到stderr和日志）"""
    if logger is None:
        logger = get_logger()

    print(f"警告: {message}", file=sys.stderr)
    logger.warning(message)


@contextmanager
def log_timing(stage: str, logger: Optional[logging.Logger] = None) -> Iterator[None]:
    """
    记录一个阶段的耗时

    Args:
        stage: 阶段名称
        logger: 日志记录器（可选）
    """
    if logger is None:
        logger = get_logger()

    begin = perf_counter()
    try:
        yield
    finally:
        logger.info("阶段 %s 耗时 %.1f ms", stage, (perf_counter() - begin) * 1000)
