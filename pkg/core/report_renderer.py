"""
报告渲染模块
负责把汇总 CSV 转换为 Markdown 表格与带主题样式的 HTML 报告
"""
import html
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import markdown

from .experiment import SUMMARY_FIELDS, read_rows
from .logger_util import get_logger, log_error
from .resource_path import get_assets_dir

THEMES = ('light', 'dark')


def _read_header(path: Path) -> List[Tuple[str, str]]:
    """读取 CSV 开头的 '# key: value' 注释"""
    items = []
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            if not line.startswith('#'):
                break
            key, _, value = line[1:].partition(':')
            items.append((key.strip(), value.strip()))
    return items


def _cell(value: str) -> str:
    return value.replace('|', '\\|')


class ReportRenderer:
    """汇总报告渲染器"""

    def __init__(self):
        self._css_cache: Dict[str, str] = {}
        self._logger = get_logger(__name__)

    def _load_css(self, theme: str) -> str:
        """
        加载CSS样式（带缓存）

        Args:
            theme: 主题名称（'light' 或 'dark'）

        Returns:
            CSS样式内容，文件缺失时为空字符串
        """
        if theme in self._css_cache:
            return self._css_cache[theme]

        css_file = get_assets_dir() / 'css' / f'{theme}.css'
        if css_file.exists():
            try:
                with open(css_file, 'r', encoding='utf-8') as f:
                    css_content = f.read()
                self._css_cache[theme] = css_content
                return css_content
            except IOError as e:
                log_error("加载CSS文件失败", e, self._logger)
        return ''

    def summary_to_markdown(self, summary_path: Union[str, Path], title: Optional[str] = None) -> str:
        """
        汇总 CSV 转为 Markdown：标题、参数列表与按实验分节的表格

        Args:
            summary_path: aggregate 写出的汇总文件
            title: 报告标题，缺省取文件名
        """
        summary_path = Path(summary_path)
        rows = read_rows(summary_path, SUMMARY_FIELDS)
        lines = [f"# {title or summary_path.stem}", '']

        header = _read_header(summary_path)
        if header:
            lines.extend(f"- **{key}**: `{value}`" for key, value in header)
            lines.append('')

        columns = [name for name in SUMMARY_FIELDS if name != 'experiment']
        experiments: Dict[str, List[Dict[str, str]]] = {}
        for row in rows:
            experiments.setdefault(row['experiment'], []).append(row)

        for experiment, group in experiments.items():
            lines.append(f"## {experiment}")
            lines.append('')
            lines.append('| ' + ' | '.join(columns) + ' |')
            lines.append('|' + '---|' * len(columns))
            for row in group:
                lines.append('| ' + ' | '.join(_cell(row.get(name, '')) for name in columns) + ' |')
            lines.append('')

        if not experiments:
            lines.append('（没有可汇总的结果）')
        return '\n'.join(lines)

    def _generate_html_document(self, html_body: str, css_content: str, title: str) -> str:
        return f"""<!DOCTYPE html>
<html lang="zh-CN">
<head>
    <meta charset="UTF-8">
    <title>{html.escape(title)}</title>
    <style>
        {css_content}
    </style>
</head>
<body>
    {html_body}
</body>
</html>"""

    def render_text(self, text: str, theme: str = 'light', title: str = '报告') -> str:
        """
        渲染 Markdown 文本为完整 HTML 文档

        Args:
            text: Markdown 文本
            theme: 'light' 或 'dark'，其他取值按 light 处理
        """
        if theme not in THEMES:
            self._logger.warning("未知主题 %s，改用 light", theme)
            theme = 'light'
        html_body = markdown.markdown(text, extensions=['tables', 'sane_lists'])
        return self._generate_html_document(html_body, self._load_css(theme), title)

    def render_summary(self, summary_path: Union[str, Path], output_path: Optional[Union[str, Path]] = None,
                       theme: str = 'light') -> Path:
        """
        渲染汇总文件并写出 HTML（缺省与汇总文件同名 .html）

        Returns:
            HTML 文件路径
        """
        summary_path = Path(summary_path)
        output_path = Path(output_path) if output_path else summary_path.with_suffix('.html')
        text = self.summary_to_markdown(summary_path)
        document = self.render_text(text, theme, summary_path.stem)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with open(output_path, 'w', encoding='utf-8') as f:
            f.write(document)
        self._logger.info("报告写入 %s", output_path)
        return output_path
