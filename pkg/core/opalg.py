"""
二次量子化算符代数模块
费米子算符串的位编码、规范化、乘法、厄米配对与粒子-空穴截断

编码约定：格点 i 占用第 2i、2i+1 两位，00=恒等，01=湮灭 c，10=产生 c†，11=密度 n。
算符串按格点升序相乘；Slater 态 c†_{b1}···c†_{bN}|0⟩ 同样按格点升序排列（b1 < ··· < bN）。
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from itertools import product
from pathlib import Path
from typing import (TYPE_CHECKING, Dict, Iterable, Iterator, List, Mapping,
                    Optional, Sequence, Tuple, Union)

from .errors import OperatorError
from .logger_util import get_logger

if TYPE_CHECKING:
    from .refstate import ReferenceState

DEFAULT_PRUNE_THRESHOLD = 1e-12

_logger = get_logger(__name__)


class SiteOp(IntEnum):
    """单格点算符代码"""
    IDENTITY = 0
    ANNIHILATE = 1
    CREATE = 2
    DENSITY = 3


_SYMBOLS = {SiteOp.ANNIHILATE: 'c', SiteOp.CREATE: 'c†', SiteOp.DENSITY: 'n'}
_ALIASES = {
    'c': SiteOp.ANNIHILATE, 'a': SiteOp.ANNIHILATE,
    'cdag': SiteOp.CREATE, 'c+': SiteOp.CREATE, 'c†': SiteOp.CREATE,
    'n': SiteOp.DENSITY,
}

# 同一格点上两个算符的乘积（左 × 右），结果为 (代码, 系数) 的线性组合
_SITE_PRODUCT: Dict[Tuple[int, int], Tuple[Tuple[int, float], ...]] = {
    (1, 1): (),
    (2, 2): (),
    (2, 1): ((3, 1.0),),
    (1, 2): ((0, 1.0), (3, -1.0)),
    (3, 2): ((2, 1.0),),
    (2, 3): (),
    (1, 3): ((1, 1.0),),
    (3, 1): (),
    (3, 3): ((3, 1.0),),
}

StringLike = Union['OperatorString', int]
Factor = Tuple[Union[SiteOp, str, int], int]


# ---------------------------------------------------------------------------
# 位运算工具
# ---------------------------------------------------------------------------

def _popcount(value: int) -> int:
    return value.bit_count()


def _odd(value: int) -> bool:
    return value.bit_count() & 1 == 1


@lru_cache(maxsize=1 << 16)
def spread(mask: int) -> int:
    """把格点掩码（第 i 位）展开到编码位置（第 2i 位）"""
    result = 0
    site = 0
    while mask:
        if mask & 1:
            result |= 1 << (2 * site)
        mask >>= 1
        site += 1
    return result


@lru_cache(maxsize=1 << 20)
def decode(code: int) -> Tuple[int, int, int]:
    """
    拆分编码

    Returns:
        (产生算符格点掩码, 湮灭算符格点掩码, 密度算符格点掩码)
    """
    cre = ann = den = 0
    site = 0
    while code:
        op = code & 3
        if op == SiteOp.ANNIHILATE:
            ann |= 1 << site
        elif op == SiteOp.CREATE:
            cre |= 1 << site
        elif op == SiteOp.DENSITY:
            den |= 1 << site
        code >>= 2
        site += 1
    return cre, ann, den


def encode(cre: int, ann: int, den: int) -> int:
    """由三个格点掩码合成编码（三者须互不相交）"""
    if cre & ann or cre & den or ann & den:
        raise OperatorError("同一格点上出现多个算符")
    return spread(ann) | (spread(cre) << 1) | (spread(den) * 3)


@lru_cache(maxsize=1 << 16)
def below_parity_mask(fermions: int) -> int:
    """对每个费米格点 j 取“低于 j 的格点”掩码并做异或；与占据数求奇偶即得重排符号"""
    mask = 0
    while fermions:
        low = fermions & -fermions
        mask ^= low - 1
        fermions ^= low
    return mask


def merge_sign(first: int, second: int) -> int:
    """不相交算符串之积 Op(first)·Op(second) = sign·Op(first|second) 中的 sign"""
    cre_a, ann_a, _ = decode(first)
    cre_b, ann_b, _ = decode(second)
    return -1 if _odd((cre_b | ann_b) & below_parity_mask(cre_a | ann_a)) else 1


@lru_cache(maxsize=1 << 20)
def action_data(code: int) -> Tuple[int, int, int, int, int, int]:
    cre, ann, den = decode(code)
    flip = cre | ann
    m = _popcount(flip)
    conj_sign = -1 if (m * (m - 1) // 2) % 2 else 1
    return cre, ann, den, flip, below_parity_mask(flip), conj_sign


@lru_cache(maxsize=1 << 20)
def conjugate_code(code: int) -> Tuple[int, int]:
    """
    厄米共轭

    Returns:
        (共轭后的规范编码, 符号)，满足 Op(code)† = 符号 × Op(共轭编码)
    """
    cre, ann, den, _, _, conj_sign = action_data(code)
    return encode(ann, cre, den), conj_sign


def is_diagonal_code(code: int) -> bool:
    cre, ann, _ = decode(code)
    return not (cre | ann)


@lru_cache(maxsize=1 << 20)
def representative_code(code: int) -> Tuple[int, bool]:
    """厄米对 {X, X†} 中编码数值较小者；第二个返回值表示是否取了共轭"""
    conj, _ = conjugate_code(code)
    if conj < code:
        return conj, True
    return code, False


def accumulate_hermitian(accumulator: Dict[int, float], code: int, value: float):
    """把 value·Op(code) 的厄米部分累加到已配对的 {编码: 系数} 字典"""
    if is_diagonal_code(code):
        accumulator[code] = accumulator.get(code, 0.0) + value
        return
    rep, flipped = representative_code(code)
    if flipped:
        value *= conjugate_code(rep)[1]
    accumulator[rep] = accumulator.get(rep, 0.0) + 0.5 * value


def _parse_kind(kind: Union[SiteOp, str, int]) -> SiteOp:
    if isinstance(kind, str):
        try:
            return _ALIASES[kind.strip().lower()]
        except KeyError:
            raise OperatorError(f"未知的格点算符: {kind!r}") from None
    op = SiteOp(int(kind))
    if op == SiteOp.IDENTITY:
        raise OperatorError("单格点因子不能是恒等算符")
    return op


# ---------------------------------------------------------------------------
# 算符串
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorString:
    """按格点升序的算符乘积，每格点两位编码"""
    code: int
    length: int

    def __post_init__(self):
        if self.length <= 0:
            raise OperatorError(f"格点数必须为正: {self.length}")
        if self.code < 0 or self.code >> (2 * self.length):
            raise OperatorError(f"编码超出 {self.length} 个格点的范围")

    @classmethod
    def from_sites(cls, length: int, sites: Mapping[int, Union[SiteOp, str, int]]) -> 'OperatorString':
        """由 {格点: 算符} 构造"""
        code = 0
        for site, kind in sites.items():
            if not 0 <= site < length:
                raise OperatorError(f"格点 {site} 超出范围 [0, {length})")
            code |= int(_parse_kind(kind)) << (2 * site)
        return cls(code, length)

    @classmethod
    def parse(cls, text: str, length: int) -> 'OperatorString':
        """解析 `site:code site:code ...`"""
        sites: Dict[int, int] = {}
        for token in text.split():
            try:
                site_text, code_text = token.split(':')
                site, op = int(site_text), int(code_text)
            except ValueError:
                raise OperatorError(f"无法解析的算符片段: {token!r}") from None
            if site in sites:
                raise OperatorError(f"格点 {site} 重复出现")
            sites[site] = op
        return cls.from_sites(length, sites)

    def __int__(self) -> int:
        return self.code

    def site_op(self, site: int) -> SiteOp:
        return SiteOp((self.code >> (2 * site)) & 3)

    @property
    def creation_sites(self) -> Tuple[int, ...]:
        return _sites_of(decode(self.code)[0])

    @property
    def annihilation_sites(self) -> Tuple[int, ...]:
        return _sites_of(decode(self.code)[1])

    @property
    def density_sites(self) -> Tuple[int, ...]:
        return _sites_of(decode(self.code)[2])

    @property
    def support(self) -> Tuple[int, ...]:
        cre, ann, den = decode(self.code)
        return _sites_of(cre | ann | den)

    @property
    def is_diagonal(self) -> bool:
        return is_diagonal_code(self.code)

    @property
    def is_particle_conserving(self) -> bool:
        cre, ann, _ = decode(self.code)
        return _popcount(cre) == _popcount(ann)

    @property
    def order(self) -> int:
        """产生与湮灭算符的总个数（密度算符不计）"""
        cre, ann, _ = decode(self.code)
        return _popcount(cre | ann)

    def conjugate(self) -> Tuple['OperatorString', int]:
        conj, sign = conjugate_code(self.code)
        return OperatorString(conj, self.length), sign

    def to_text(self) -> str:
        return ' '.join(f"{site}:{int(self.site_op(site))}" for site in self.support)

    def __str__(self) -> str:
        if not self.code:
            return '1'
        return ' '.join(f"{_SYMBOLS[self.site_op(site)]}{site}" for site in self.support)


def _sites_of(mask: int) -> Tuple[int, ...]:
    sites = []
    site = 0
    while mask:
        if mask & 1:
            sites.append(site)
        mask >>= 1
        site += 1
    return tuple(sites)


def _as_code(string: StringLike, length: int) -> int:
    if isinstance(string, OperatorString):
        if string.length != length:
            raise OperatorError(f"算符串格点数 {string.length} 与 {length} 不一致")
        return string.code
    code = int(string)
    if code < 0 or code >> (2 * length):
        raise OperatorError(f"编码超出 {length} 个格点的范围")
    return code


# ---------------------------------------------------------------------------
# 乘法与规范化
# ---------------------------------------------------------------------------

def multiply_codes(first: int, second: int) -> List[Tuple[int, float]]:
    """Op(first)·Op(second) 的正规序展开"""
    cre_a, ann_a, den_a = decode(first)
    cre_b, ann_b, den_b = decode(second)
    coef = -1.0 if _odd((cre_b | ann_b) & below_parity_mask(cre_a | ann_a)) else 1.0

    overlap = (cre_a | ann_a | den_a) & (cre_b | ann_b | den_b)
    if not overlap:
        return [(first | second, coef)]

    overlap_bits = spread(overlap) * 3
    base = (first | second) & ~overlap_bits
    options = []
    for site in _sites_of(overlap):
        shift = 2 * site
        local = _SITE_PRODUCT[((first >> shift) & 3, (second >> shift) & 3)]
        if not local:
            return []
        options.append([(op << shift, value) for op, value in local])

    results = []
    for combo in product(*options):
        code = base
        value = coef
        for part, factor in combo:
            code |= part
            value *= factor
        results.append((code, value))
    return results


def multiply(first: OperatorString, second: OperatorString) -> List[Tuple[OperatorString, float]]:
    """
    两个算符串之积

    Returns:
        [(算符串, 系数)]，空列表表示乘积为零
    """
    if first.length != second.length:
        raise OperatorError("两个算符串的格点数不同")
    return [(OperatorString(code, first.length), value)
            for code, value in multiply_codes(first.code, second.code)]


def canonicalize(factors: Sequence[Factor], length: int) -> List[Tuple[OperatorString, float]]:
    """
    把按书写顺序给出的单格点因子化为规范形式

    Args:
        factors: [(算符类型, 格点)]，类型可为 'c' / 'cdag' / 'n' 或 SiteOp
        length: 格点数

    Returns:
        [(规范算符串, 系数)]，按编码排序；空列表表示乘积为零
    """
    terms: Dict[int, float] = {0: 1.0}
    for kind, site in factors:
        if not 0 <= site < length:
            raise OperatorError(f"格点 {site} 超出范围 [0, {length})")
        factor = int(_parse_kind(kind)) << (2 * site)
        merged: Dict[int, float] = defaultdict(float)
        for code, value in terms.items():
            for new_code, new_value in multiply_codes(code, factor):
                merged[new_code] += value * new_value
        terms = {code: value for code, value in merged.items() if value != 0.0}
        if not terms:
            return []
    return [(OperatorString(code, length), value) for code, value in sorted(terms.items())]


def hermitian_representative(string: OperatorString) -> Tuple[OperatorString, bool]:
    """厄米对的规范代表（编码数值较小者）及是否取了共轭"""
    if string.is_diagonal:
        raise OperatorError(f"对角算符串没有厄米配对: {string}")
    code, flipped = representative_code(string.code)
    return OperatorString(code, string.length), flipped


def apply_to_config(string: StringLike, occupied: int) -> Optional[Tuple[int, int]]:
    """
    算符串作用于规范 Slater 态

    Returns:
        (符号, 新占据掩码)；结果为零时返回 None
    """
    code = string.code if isinstance(string, OperatorString) else int(string)
    cre, ann, den, flip, parity_mask, _ = action_data(code)
    if (ann | den) & ~occupied or cre & occupied:
        return None
    sign = -1 if _odd(occupied & parity_mask) else 1
    return sign, occupied ^ flip


# ---------------------------------------------------------------------------
# 算符和
# ---------------------------------------------------------------------------

class OperatorSum:
    """
    以系数索引的算符串集合

    对角项存储为 v·D；非对角项只存厄米代表 R，系数 v 表示 v(R + R†)。
    """

    def __init__(self, length: int, prune_threshold: float = DEFAULT_PRUNE_THRESHOLD):
        if length <= 0:
            raise OperatorError(f"格点数必须为正: {length}")
        self.length = length
        self.prune_threshold = prune_threshold
        self.terms: Dict[int, float] = {}

    @classmethod
    def from_accumulator(cls, length: int, prune_threshold: float,
                         accumulator: Mapping[int, float]) -> 'OperatorSum':
        """由已配对的 {编码: 系数} 构造并剪枝"""
        result = cls(length, prune_threshold)
        result.terms = {code: value for code, value in accumulator.items()
                        if abs(value) >= prune_threshold}
        return result

    def copy(self) -> 'OperatorSum':
        result = OperatorSum(self.length, self.prune_threshold)
        result.terms = dict(self.terms)
        return result

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self) -> Iterator[Tuple[OperatorString, float]]:
        for code, value in self.terms.items():
            yield OperatorString(code, self.length), value

    def __repr__(self) -> str:
        return f"OperatorSum(length={self.length}, terms={len(self.terms)})"

    def add_term(self, string: StringLike, value: float):
        """
        合并一项；非对角项按 v(S + S†) 理解并折算到厄米代表

        Args:
            string: 规范算符串
            value: 系数
        """
        code = _as_code(string, self.length)
        cre, ann, _ = decode(code)
        if _popcount(cre) != _popcount(ann):
            raise OperatorError("算符串不守恒粒子数")
        if cre | ann:
            code, flipped = representative_code(code)
            if flipped:
                value *= conjugate_code(code)[1]
        self._merge(code, value)

    def add_hermitian_part(self, string: StringLike, value: float):
        """累加 value·S 的厄米部分 ½(value·S + value·S†)"""
        part: Dict[int, float] = {}
        accumulate_hermitian(part, _as_code(string, self.length), value)
        for code, merged in part.items():
            self._merge(code, merged)

    def _merge(self, code: int, value: float):
        merged = self.terms.get(code, 0.0) + value
        if abs(merged) < self.prune_threshold:
            self.terms.pop(code, None)
        else:
            self.terms[code] = merged

    def coefficient(self, string: StringLike) -> float:
        """按给定方向读取系数：对非代表的非对角串返回 v(S + S†) 中的 v"""
        code = _as_code(string, self.length)
        if is_diagonal_code(code):
            return self.terms.get(code, 0.0)
        rep, flipped = representative_code(code)
        value = self.terms.get(rep, 0.0)
        return value * conjugate_code(rep)[1] if flipped else value

    def diagonal_terms(self) -> Dict[int, float]:
        return {code: value for code, value in self.terms.items() if is_diagonal_code(code)}

    def offdiagonal_terms(self) -> Dict[int, float]:
        return {code: value for code, value in self.terms.items() if not is_diagonal_code(code)}

    def classical_energy(self, occupied: int) -> float:
        """规范 Slater 态下的经典能量（只有对角项贡献）"""
        energy = 0.0
        for code, value in self.terms.items():
            cre, ann, den = decode(code)
            if not (cre | ann) and not den & ~occupied:
                energy += value
        return energy

    def act_on(self, occupied: int) -> Tuple[float, Dict[int, float]]:
        """
        H 作用于规范 Slater 态

        Returns:
            (对角能量, {新占据掩码: 振幅})
        """
        energy = 0.0
        amplitudes: Dict[int, float] = defaultdict(float)
        for code, value in self.terms.items():
            cre, ann, den, flip, parity_mask, conj_sign = action_data(code)
            if not flip:
                if not den & ~occupied:
                    energy += value
                continue
            if not (ann | den) & ~occupied and not cre & occupied:
                sign = -1 if _odd(occupied & parity_mask) else 1
            elif not (cre | den) & ~occupied and not ann & occupied:
                sign = -conj_sign if _odd(occupied & parity_mask) else conj_sign
            else:
                continue
            amplitudes[occupied ^ flip] += sign * value
        return energy, dict(amplitudes)

    def dumps(self) -> str:
        """逐行文本：`coefficient site:code site:code ...`"""
        lines = [f"# length={self.length}"]
        for code in sorted(self.terms):
            text = OperatorString(code, self.length).to_text()
            lines.append(f"{self.terms[code]!r} {text}".rstrip())
        return '\n'.join(lines) + '\n'

    @classmethod
    def loads(cls, text: str, length: Optional[int] = None,
              prune_threshold: float = DEFAULT_PRUNE_THRESHOLD) -> 'OperatorSum':
        """解析 dumps 的输出；首行的 length 优先于参数"""
        body: List[str] = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith('#'):
                if line[1:].strip().startswith('length='):
                    length = int(line[1:].strip()[len('length='):])
                continue
            body.append(line)
        if length is None:
            raise OperatorError("缺少格点数（# length=L）")

        result = cls(length, prune_threshold)
        for line in body:
            head, _, rest = line.partition(' ')
            try:
                value = float(head)
            except ValueError:
                raise OperatorError(f"无法解析的系数: {head!r}") from None
            code = OperatorString.parse(rest, length).code
            if code in result.terms:
                raise OperatorError(f"重复的算符串: {rest}")
            result.terms[code] = value
        return result

    def save(self, path: Union[str, Path]):
        Path(path).write_text(self.dumps(), encoding='utf-8')

    @classmethod
    def load(cls, path: Union[str, Path], prune_threshold: float = DEFAULT_PRUNE_THRESHOLD) -> 'OperatorSum':
        return cls.loads(Path(path).read_text(encoding='utf-8'), prune_threshold=prune_threshold)


def identity_operator(length: int) -> OperatorSum:
    result = OperatorSum(length)
    result.add_term(0, 1.0)
    return result


# ---------------------------------------------------------------------------
# 粒子-空穴视角
# ---------------------------------------------------------------------------

def _occupation_of(ref: Union['ReferenceState', int]) -> int:
    return ref if isinstance(ref, int) else ref.occupied


def particle_hole_view(string: StringLike, ref: Union['ReferenceState', int]) -> Tuple[int, int]:
    """
    相对参考态的激发数

    Returns:
        (空轨道上的产生算符个数, 占据轨道上的湮灭算符个数)
    """
    code = string.code if isinstance(string, OperatorString) else int(string)
    occupied = _occupation_of(ref)
    cre, ann, _ = decode(code)
    return _popcount(cre & ~occupied), _popcount(ann & occupied)


def _pair_excitations(code: int, occupied: int) -> Tuple[int, int]:
    """厄米对两个方向中较大的激发数"""
    cre, ann, _ = decode(code)
    particles = max(_popcount(cre & ~occupied), _popcount(ann & ~occupied))
    holes = max(_popcount(ann & occupied), _popcount(cre & occupied))
    return particles, holes


def truncate_by_excitation(hamiltonian: OperatorSum, ref: Union['ReferenceState', int],
                           max_particles: Optional[int], max_holes: Optional[int]) -> OperatorSum:
    """
    删除粒子或空穴激发数超过上限的项；None 表示不设上限

    非对角项按厄米对处理：两个方向中的较大计数须同时满足上限。
    """
    if max_particles is not None and max_particles < 0 or max_holes is not None and max_holes < 0:
        raise OperatorError("激发上限不能为负")
    occupied = _occupation_of(ref)
    cap_p = float('inf') if max_particles is None else max_particles
    cap_h = float('inf') if max_holes is None else max_holes

    result = OperatorSum(hamiltonian.length, hamiltonian.prune_threshold)
    kept: Dict[int, float] = {}
    dropped = 0
    for code, value in hamiltonian.terms.items():
        if not is_diagonal_code(code):
            particles, holes = _pair_excitations(code, occupied)
            if particles > cap_p or holes > cap_h:
                dropped += 1
                continue
        kept[code] = value
    result.terms = kept
    if dropped:
        _logger.debug("激发截断删除 %d 项，保留 %d 项", dropped, len(kept))
    return result


def iter_factors(string: OperatorString) -> Iterable[Tuple[SiteOp, int]]:
    """按格点升序列出单格点因子"""
    for site in string.support:
        yield string.site_op(site), site
