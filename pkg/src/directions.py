"""
方向集合模組 - D 階 lacunary 方向集合的產生、驗證與組合結構

角度以「圈」為單位（方向 e^{2πiθ}），限定在第一象限 0 ≤ θ ≤ 1/4，根方向固定為 θ = 0。
產生器給出的角度一律是二進位有理數（fractions.Fraction），距離比較以精確算術進行；
只有外部輸入的浮點角度才退回浮點比較。

樹狀憑證的約定：
    - 每個節點的子節點是一串順時針（角度遞減）收斂到該節點的序列，全部位於節點上方。
    - 第 d 層節點組成 Θ_d；方向集合本身是最深一層（第 D 層）的節點，不含根與中間層。
    - 第 d 層必須是「第 0 ~ d−1 層全部節點」的 successor。
"""
import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from loguru import logger

from .utils import atomic_write_text, is_power_of_two

Angle = Union[Fraction, float]

QUARTER = Fraction(1, 4)
COLLISION_GAP = 1e-13
# 公比的分母上限
RATIO_DENOMINATOR = 32
FLOAT_SLACK = 1e-12


class DirectionSetError(ValueError):
    """方向集合或其憑證不合法"""


def as_angle(value) -> Angle:
    """
    正規化角度：整數、Fraction 與 'p/q' 字串轉為 Fraction，其餘轉為 float

    Args:
        value: 角度（圈）

    Returns:
        Angle: Fraction 或 float
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    return float(value)


def is_dyadic(value: Angle) -> bool:
    return isinstance(value, Fraction) and is_power_of_two(value.denominator)


def angle_distance(a: Angle, b: Angle) -> Angle:
    """第一象限內的測地距離；兩者皆為 Fraction 時結果精確"""
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return abs(a - b)
    return abs(float(a) - float(b))


def _exceeds(a: Angle, b: Angle) -> bool:
    """a > b；含浮點時容許 1e-12 相對誤差"""
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a > b
    return float(a) > float(b) * (1 + FLOAT_SLACK) + 1e-300


def _below(a: Angle, b: Angle) -> bool:
    """a < b；含浮點時容許 1e-12 相對誤差"""
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a < b
    return float(a) < float(b) * (1 - FLOAT_SLACK)


def _fmt(value: Angle) -> str:
    if isinstance(value, Fraction):
        return f"{value} (~{float(value):.6g})"
    return f"{value:.12g}"


@dataclass(frozen=True, order=True)
class Direction:
    """單位向量 e^{2πiθ}，0 ≤ θ ≤ 1/4"""
    theta: Angle

    def __post_init__(self):
        theta = as_angle(self.theta)
        if not (0 <= theta <= QUARTER):
            raise DirectionSetError(f"Direction angle {theta} outside [0, 1/4]")
        object.__setattr__(self, "theta", theta)

    @property
    def exact(self) -> Optional[Fraction]:
        return self.theta if isinstance(self.theta, Fraction) else None

    @property
    def vector(self) -> Tuple[float, float]:
        """(cos 2πθ, sin 2πθ)；θ = 0、1/8、1/4 時取精確值"""
        if self.theta == 0:
            return 1.0, 0.0
        if self.theta == QUARTER:
            return 0.0, 1.0
        if self.theta == Fraction(1, 8):
            r = math.sqrt(0.5)
            return r, r
        phase = 2 * math.pi * float(self.theta)
        return math.cos(phase), math.sin(phase)

    @property
    def perp(self) -> Tuple[float, float]:
        """v^⊥ = e^{2πi(θ + 1/4)}"""
        c, s = self.vector
        return -s, c

    @property
    def theta_perp(self) -> Angle:
        return self.theta + (QUARTER if isinstance(self.theta, Fraction) else 0.25)

    def __float__(self) -> float:
        return float(self.theta)


ROOT = Direction(Fraction(0))


@dataclass(frozen=True)
class TreeNode:
    """憑證樹節點：方向與順時針收斂到它的子節點序列"""
    direction: Direction
    children: Tuple["TreeNode", ...] = ()

    @property
    def theta(self) -> Angle:
        return self.direction.theta


@dataclass(frozen=True)
class LacunaryTree:
    """
    D 階 lacunary 憑證

    Attributes:
        root: 根節點（極限方向 v_∞）
        lam: lacunary 常數 λ ∈ (0,1)
        order: 階數 D（葉節點所在深度）
    """
    root: TreeNode
    lam: Angle
    order: int

    def __post_init__(self):
        lam = as_angle(self.lam)
        if not (0 < lam < 1):
            raise DirectionSetError(f"Lacunarity constant must lie in (0,1), got {lam}")
        if self.order < 0:
            raise DirectionSetError(f"Order must be >= 0, got {self.order}")
        object.__setattr__(self, "lam", lam)

    def level(self, depth: int) -> List[Tuple[Tuple[int, ...], TreeNode]]:
        """第 depth 層的 (路徑, 節點)，依樹的走訪順序"""
        frontier = [((), self.root)]
        for _ in range(depth):
            frontier = [
                (path + (k,), child)
                for path, node in frontier
                for k, child in enumerate(node.children)
            ]
        return frontier

    def flatten(self) -> List[Direction]:
        """最深層的方向，順時針排序"""
        return sorted((node.direction for _, node in self.level(self.order)), reverse=True)

    def node_at(self, path: Sequence[int]) -> TreeNode:
        node = self.root
        for k in path:
            node = node.children[k]
        return node

    def with_angle(self, path: Sequence[int], theta: Angle) -> "LacunaryTree":
        """回傳把 path 節點換成新角度的樹（其子樹保留）"""
        def rebuild(node: TreeNode, rest: Sequence[int]) -> TreeNode:
            if not rest:
                return replace(node, direction=Direction(theta))
            k = rest[0]
            children = list(node.children)
            children[k] = rebuild(children[k], rest[1:])
            return replace(node, children=tuple(children))

        return replace(self, root=rebuild(self.root, tuple(path)))


@dataclass(frozen=True)
class DirectionSet:
    """有限方向集合，順時針（角度遞減）排序，可附 lacunary 憑證"""
    directions: Tuple[Direction, ...]
    certificate: Optional[LacunaryTree] = None

    def __post_init__(self):
        dirs = tuple(sorted((d if isinstance(d, Direction) else Direction(d) for d in self.directions),
                            reverse=True))
        for a, b in zip(dirs, dirs[1:]):
            if a.theta == b.theta:
                raise DirectionSetError(f"Duplicate direction {_fmt(a.theta)}")
        if self.certificate is not None:
            flat = tuple(self.certificate.flatten())
            if flat != dirs:
                raise DirectionSetError("Certificate does not flatten to the direction list")
        object.__setattr__(self, "directions", dirs)

    @classmethod
    def from_tree(cls, tree: LacunaryTree) -> "DirectionSet":
        return cls(tuple(tree.flatten()), tree)

    def __len__(self) -> int:
        return len(self.directions)

    def __iter__(self) -> Iterator[Direction]:
        return iter(self.directions)

    def __getitem__(self, index: int) -> Direction:
        return self.directions[index]

    @property
    def order(self) -> Optional[int]:
        return self.certificate.order if self.certificate else None

    @property
    def lam(self) -> Optional[Angle]:
        return self.certificate.lam if self.certificate else None

    @property
    def thetas(self) -> List[float]:
        return [float(d.theta) for d in self.directions]

    def subset(self, indices: Iterable[int]) -> "DirectionSet":
        """取出部分方向（不帶憑證）"""
        return DirectionSet(tuple(self.directions[i] for i in indices))

    def describe(self) -> str:
        if self.certificate is None:
            return f"{len(self)} directions (uncertified)"
        return f"{len(self)} directions, order {self.order}, lambda {self.lam}"


@dataclass(frozen=True)
class Arc:
    """[0, 1/4] 內的弧段"""
    lo: Angle
    hi: Angle
    lo_closed: bool = False
    hi_closed: bool = False

    def __post_init__(self):
        if not (0 <= self.lo <= self.hi <= QUARTER):
            raise DirectionSetError(f"Arc ({self.lo}, {self.hi}) not inside [0, 1/4]")
        if self.lo == self.hi and not (self.lo_closed and self.hi_closed):
            raise DirectionSetError(f"Empty arc at {self.lo}")

    @property
    def length(self) -> Angle:
        return angle_distance(self.hi, self.lo)

    def contains(self, theta: Angle) -> bool:
        above = self.lo <= theta if self.lo_closed else self.lo < theta
        below = theta <= self.hi if self.hi_closed else theta < self.hi
        return above and below


@dataclass(frozen=True)
class OrderReport:
    """verify_order 的結果；ok 為 False 時標明第一個違規的層、節點與點對"""
    ok: bool
    order: Optional[int] = None
    level: Optional[int] = None
    node: Optional[Angle] = None
    path: Optional[Tuple[int, ...]] = None
    pair: Optional[Tuple[Angle, Angle]] = None
    reason: str = ""

    def __str__(self) -> str:
        if self.ok:
            return f"order {self.order}, OK"
        parts = [f"violation: {self.reason}"]
        if self.level is not None:
            parts.append(f"level {self.level}")
        if self.node is not None:
            parts.append(f"node {_fmt(self.node)}")
        if self.path is not None:
            parts.append(f"path {'/'.join(str(k) for k in self.path)}")
        if self.pair is not None:
            parts.append(f"pair ({_fmt(self.pair[0])}, {_fmt(self.pair[1])})")
        return ", ".join(parts)


# ------------------------------------------------------------
# 產生器
# ------------------------------------------------------------

def dyadic_ratio(lam: Angle) -> Fraction:
    """
    不超過 λ、分母為 RATIO_DENOMINATOR 的最大二進位有理數 m/32

    λ < 1/32 時退回不超過 λ 的最大 2 的冪次。
    """
    lam = as_angle(lam)
    if not (0 < lam < 1):
        raise DirectionSetError(f"Lacunarity constant must lie in (0,1), got {lam}")
    m = math.floor(lam * RATIO_DENOMINATOR)
    if m >= 1:
        return Fraction(m, RATIO_DENOMINATOR)
    k = 1
    while Fraction(1, 2 ** k) > lam:
        k += 1
    return Fraction(1, 2 ** k)


def canonical_lacunary(
    order: int,
    lam: Angle,
    counts: Union[int, Sequence[int]],
    clearance: int = 4
) -> DirectionSet:
    """
    產生標準 D 階 lacunary 集合（附憑證）

    以 r = dyadic_ratio(λ) 為公比（λ = 2/3 時 r = 21/32）。第 1 層在根上方取 (1/4)·r^k；
    更深層的子節點從 gap·2^{−clearance} 開始、公比 r，
    gap 為節點到其上方最近的同層或較淺節點（或 1/4）的距離。
    λ = 1/2 時即 θ_j = 2^{−j−2} 與 θ_{j,k} = 2^{−j−2} + 2^{−k−2}（k ≥ j+4）。

    Args:
        order: 階數 D ≥ 0
        lam: lacunary 常數 λ ∈ (0,1)
        counts: 每層每個節點的子節點數（整數代表各層相同）
        clearance: 第 2 層以下第一個子節點的二進位間隔

    Returns:
        DirectionSet: 帶憑證的方向集合
    """
    if order < 0:
        raise DirectionSetError(f"Order must be >= 0, got {order}")
    lam = as_angle(lam)
    ratio = dyadic_ratio(lam)
    if isinstance(counts, int):
        counts = [counts] * order
    counts = list(counts)
    if len(counts) < order:
        raise DirectionSetError(f"Need {order} per-level counts, got {len(counts)}")
    if any(c < 1 for c in counts[:order]):
        raise DirectionSetError(f"Per-level counts must be >= 1, got {counts[:order]}")

    def build(theta: Fraction, upper: Fraction, depth: int) -> TreeNode:
        if depth == order:
            return TreeNode(Direction(theta))
        gap = upper - theta
        first = gap * ratio if depth == 0 else gap / 2 ** clearance
        offsets = [first * ratio ** k for k in range(counts[depth])]
        children = []
        child_upper = upper
        for off in offsets:
            child_theta = theta + off
            children.append(build(child_theta, child_upper, depth + 1))
            child_upper = child_theta
        return TreeNode(Direction(theta), tuple(children))

    tree = LacunaryTree(build(Fraction(0), QUARTER, 0), lam, order)
    flat = tree.flatten()
    for a, b in zip(flat, flat[1:]):
        if float(a.theta - b.theta) < COLLISION_GAP:
            raise DirectionSetError(
                f"Angles {_fmt(a.theta)} and {_fmt(b.theta)} closer than {COLLISION_GAP}"
            )
    logger.debug(f"Generated {order}-lacunary set with {len(flat)} directions (ratio {ratio})")
    return DirectionSet(tuple(flat), tree)


def equispaced_set(n: int) -> DirectionSet:
    """θ_k = k/(4n)，k = 1..n（非 lacunary 的對照組，無憑證）"""
    if n < 1:
        raise DirectionSetError(f"Need at least one direction, got {n}")
    return DirectionSet(tuple(Direction(Fraction(k, 4 * n)) for k in range(1, n + 1)))


# ------------------------------------------------------------
# successor 與憑證驗證
# ------------------------------------------------------------

def _thetas(items) -> List[Angle]:
    out = []
    for item in items:
        if isinstance(item, TreeNode):
            out.append(item.theta)
        elif isinstance(item, Direction):
            out.append(item.theta)
        else:
            out.append(as_angle(item))
    return sorted(out)


def _successor_violation(theta, parent, lam: Angle) -> Optional[Tuple[Angle, Angle]]:
    """回傳第一組違反 successor 不等式的 (x, y)；沒有則 None"""
    points = _thetas(theta)
    anchors = _thetas(parent)
    if len(points) < 2 or not anchors:
        return None
    lam = as_angle(lam)
    factor = 1 / lam - 1

    def parent_distance(x: Angle) -> Angle:
        i = bisect_left(anchors, x)
        candidates = [anchors[j] for j in (i - 1, i) if 0 <= j < len(anchors)]
        return min(angle_distance(x, p) for p in candidates)

    # 已排序時只需檢查相鄰點：對固定 x，最近的 y 必為其鄰點
    for i, x in enumerate(points):
        required = factor * parent_distance(x)
        for j in (i - 1, i + 1):
            if 0 <= j < len(points):
                y = points[j]
                if _below(angle_distance(x, y), required):
                    return x, y
    return None


def is_successor(theta, parent, lam: Angle) -> bool:
    """
    Θ 是否為 ′Θ 的 successor：所有 x ≠ y ∈ Θ 滿足 dist(x,y) ≥ (1/λ − 1)·dist(x, ′Θ)

    Args:
        theta: DirectionSet 或方向、角度的序列
        parent: 父集合
        lam: 常數 λ

    Returns:
        bool: 空集合視為成立
    """
    return _successor_violation(theta, parent, lam) is None


def successor_constant(lam: Angle) -> Angle:
    """公比 λ 的幾何序列所滿足的 successor 常數 1/(2−λ)"""
    lam = as_angle(lam)
    return 1 / (2 - lam)


def _upper_bounds(nodes: Sequence[Angle]) -> Dict[Angle, Angle]:
    """每個節點上方最近的節點（沒有時為 1/4）"""
    ordered = sorted(set(nodes))
    bounds = {}
    for i, value in enumerate(ordered):
        bounds[value] = ordered[i + 1] if i + 1 < len(ordered) else QUARTER
    return bounds


def verify_order(dset: DirectionSet) -> OrderReport:
    """
    依憑證逐層驗證 lacunary 階數

    每層檢查：
        1. 子節點位於父節點與其上方最近節點之間，且嚴格順時針收斂；
        2. 相鄰子節點的偏移比 ≤ λ；
        3. 該層是較淺各層聯集的 successor，常數為 1/(2−λ)。

    Args:
        dset: 帶憑證的方向集合

    Returns:
        OrderReport: 成功時 order = D；失敗時標明第一個違規
    """
    tree = dset.certificate
    if tree is None:
        raise DirectionSetError("verify_order requires a certificate")
    lam = tree.lam
    sigma = successor_constant(lam)

    closure = [tree.root.theta]
    for depth in range(1, tree.order + 1):
        bounds = _upper_bounds(closure)
        for path, node in tree.level(depth - 1):
            if not node.children:
                return OrderReport(False, level=depth, node=node.theta, path=path,
                                   reason="node has no children below the certified order")
            upper = bounds[node.theta]
            previous = None
            for k, child in enumerate(node.children):
                child_path = path + (k,)
                offset = child.theta - node.theta
                if not offset > 0:
                    return OrderReport(False, level=depth, node=child.theta, path=child_path,
                                       reason="child does not lie above its limit")
                outside = child.theta > upper if upper == QUARTER else not child.theta < upper
                if outside:
                    return OrderReport(False, level=depth, node=child.theta, path=child_path,
                                       pair=(child.theta, upper),
                                       reason="child leaves the arc of its limit")
                if previous is not None:
                    prev_theta, prev_offset = previous
                    if not offset < prev_offset:
                        return OrderReport(False, level=depth, node=child.theta, path=child_path,
                                           pair=(prev_theta, child.theta),
                                           reason="sequence is not clockwise")
                    if _exceeds(offset, lam * prev_offset):
                        return OrderReport(False, level=depth, node=child.theta, path=child_path,
                                           pair=(prev_theta, child.theta),
                                           reason=f"consecutive ratio exceeds lambda={lam}")
                previous = (child.theta, offset)

        layer = [node.theta for _, node in tree.level(depth)]
        violation = _successor_violation(layer, closure, sigma)
        if violation is not None:
            x, y = violation
            where = next(p for p, n in tree.level(depth) if n.theta == x)
            return OrderReport(False, level=depth, node=x, path=where, pair=violation,
                               reason=f"successor inequality fails (constant {sigma})")
        closure.extend(layer)

    return OrderReport(True, order=tree.order)


# ------------------------------------------------------------
# 弧段、分割與 (j, τ) 索引
# ------------------------------------------------------------

def complementary_arcs(parent) -> List[Arc]:
    """
    父集合在 [0, 1/4] 中的互補弧段，依順時針（由上而下）排列

    端點約定：最上方的弧在 1/4 閉合，最下方的弧在 0 閉合，其餘為開弧。

    Args:
        parent: 非空的方向集合

    Returns:
        List[Arc]: 互不相交，聯集為 [0, 1/4] 扣掉父集合
    """
    points = sorted(set(_thetas(parent)), reverse=True)
    if not points:
        raise DirectionSetError("complementary_arcs needs a nonempty parent set")
    arcs = []
    if points[0] < QUARTER:
        arcs.append(Arc(points[0], QUARTER, hi_closed=True))
    for hi, lo in zip(points, points[1:]):
        arcs.append(Arc(lo, hi))
    if points[-1] > 0:
        arcs.append(Arc(Fraction(0) if isinstance(points[-1], Fraction) else 0.0, points[-1],
                        lo_closed=True))
    return arcs


def _prune(node: TreeNode, depth: int, order: int) -> Optional[TreeNode]:
    """移除到不了第 order 層的分支"""
    if depth == order:
        return node
    kept = tuple(c for c in (_prune(child, depth + 1, order) for child in node.children) if c)
    if not kept:
        return None
    return replace(node, children=kept)


def split_constant(dset: DirectionSet, lam_prime: Angle) -> List[DirectionSet]:
    """
    把常數 λ 的 D 階集合拆成數個常數 λ′ 的 D 階集合

    每層取 m_d = 使 (該層最大實際公比)^m ≤ λ′ 的最小整數，
    每個節點的子序列依索引模 m_d 分類；各層分類的組合即為一份子集合。

    Args:
        dset: 帶憑證的方向集合
        lam_prime: 新常數 λ′ ≤ λ

    Returns:
        List[DirectionSet]: 互不相交、聯集為原集合的子集合（空的組合略過）
    """
    tree = dset.certificate
    if tree is None:
        raise DirectionSetError("split_constant requires a certificate")
    lam_prime = as_angle(lam_prime)
    if lam_prime > tree.lam:
        raise DirectionSetError(f"lambda' = {lam_prime} exceeds lambda = {tree.lam}")
    if not lam_prime > 0:
        raise DirectionSetError(f"lambda' must be positive, got {lam_prime}")
    if lam_prime == tree.lam:
        return [dset]

    moduli = []
    for depth in range(tree.order):
        worst = 0
        for _, node in tree.level(depth):
            offsets = [c.theta - node.theta for c in node.children]
            for a, b in zip(offsets, offsets[1:]):
                worst = max(worst, b / a)
        m = 1
        if worst > 0:
            while _exceeds(worst ** m, lam_prime):
                m += 1
        moduli.append(m)

    parts = []
    for residues in product(*(range(m) for m in moduli)):
        def select(node: TreeNode, depth: int) -> TreeNode:
            if depth == tree.order:
                return node
            m, r = moduli[depth], residues[depth]
            kept = tuple(select(c, depth + 1) for k, c in enumerate(node.children) if k % m == r)
            return replace(node, children=kept)

        root = _prune(select(tree.root, 0), 0, tree.order)
        if root is None:
            continue
        parts.append(DirectionSet.from_tree(LacunaryTree(root, lam_prime, tree.order)))
    logger.debug(f"Split {len(dset)} directions into {len(parts)} parts (moduli {moduli})")
    return parts


@dataclass(frozen=True)
class ArcBlock:
    """
    父集合的一段互補弧及落在其中的方向

    Attributes:
        tau: 弧的索引 τ（由上而下，從 1 起算）
        arc: 弧段 ′I_τ
        top: v_{1,τ}；τ ≥ 2 時為 u_{τ−1}，τ = 1 時為 v_1
        bottom: u_τ；最下方的弧為根方向
        members: Θ_τ = Θ ∩ ′I_τ，順時針
        first_index: members 第一個元素的 j（τ = 1 為 1，其餘為 2）
    """
    tau: int
    arc: Arc
    top: Direction
    bottom: Direction
    members: Tuple[Direction, ...]
    first_index: int
    limit: Optional[TreeNode] = None

    def indexed(self) -> List[Tuple[int, Direction]]:
        return [(self.first_index + i, d) for i, d in enumerate(self.members)]

    def boundaries(self) -> List[Direction]:
        """錐 C_{j,τ} 的邊界方向 v_{1,τ}, v_{2,τ}, ..., u_τ"""
        if self.first_index == 1:
            inner = list(self.members)
        else:
            inner = [self.top] + list(self.members)
        return inner + [self.bottom]


@dataclass(frozen=True)
class JTauView:
    """Θ 依父集合 ′Θ 的互補弧分組後的 (j, τ) 索引"""
    theta: DirectionSet
    parent: Tuple[Direction, ...]
    blocks: Tuple[ArcBlock, ...]
    lookup: Dict[Direction, Tuple[int, int]] = field(default_factory=dict)

    def index_of(self, direction: Direction) -> Tuple[int, int]:
        return self.lookup[direction]

    def block(self, tau: int) -> ArcBlock:
        return self.blocks[tau - 1]

    def theta_tau(self, tau: int) -> DirectionSet:
        """Θ_τ，附以 u_τ 為根的一階憑證"""
        blk = self.block(tau)
        if blk.limit is None or not blk.members:
            return DirectionSet(blk.members)
        tree = LacunaryTree(TreeNode(blk.limit.direction, blk.limit.children), self.theta.lam, 1)
        return DirectionSet(blk.members, tree)

    def realized(self) -> List[Tuple[int, int, Direction]]:
        """所有實際落在 Θ 中的 (J, T, v_{J,T})"""
        return [(j, blk.tau, d) for blk in self.blocks for j, d in blk.indexed()]


def enumerate_jtau(dset: DirectionSet) -> JTauView:
    """
    以 (j, τ) 重新索引 Θ：Θ_τ = Θ ∩ ′I_τ，′Θ 為第 D−1 層節點

    Args:
        dset: D ≥ 1 的帶憑證集合

    Returns:
        JTauView: 每個方向恰得到一組 (j, τ)
    """
    tree = dset.certificate
    if tree is None:
        raise DirectionSetError("enumerate_jtau requires a certificate")
    if tree.order < 1:
        raise DirectionSetError("enumerate_jtau requires order >= 1")
    parent_nodes = sorted((node for _, node in tree.level(tree.order - 1)),
                          key=lambda n: n.theta, reverse=True)
    parent = tuple(n.direction for n in parent_nodes)
    by_theta = {n.theta: n for n in parent_nodes}
    arcs = complementary_arcs(parent)

    blocks = []
    lookup = {}
    remaining = list(dset.directions)
    for tau, arc in enumerate(arcs, start=1):
        members = tuple(d for d in remaining if arc.contains(d.theta))
        if tau == 1:
            top = members[0] if members else Direction(arc.hi)
            first = 1
        else:
            top = Direction(arc.hi)
            first = 2
        bottom = Direction(arc.lo)
        block = ArcBlock(tau, arc, top, bottom, members, first, by_theta.get(arc.lo))
        for j, d in block.indexed():
            lookup[d] = (j, tau)
        blocks.append(block)
    if len(lookup) != len(dset):
        raise DirectionSetError("Some directions fall on the parent set and cannot be indexed")
    return JTauView(dset, parent, tuple(blocks), lookup)


# ------------------------------------------------------------
# JSON 編碼
# ------------------------------------------------------------

def encode_angle(value: Angle):
    """二進位有理數存成 [分子, log2(分母)]，其餘存浮點"""
    if is_dyadic(value):
        return [value.numerator, value.denominator.bit_length() - 1]
    return float(value)


def decode_angle(raw) -> Angle:
    if isinstance(raw, list):
        if len(raw) != 2:
            raise DirectionSetError(f"Bad dyadic angle encoding: {raw}")
        numerator, log_den = int(raw[0]), int(raw[1])
        if log_den < 0:
            raise DirectionSetError(f"Bad dyadic angle encoding: {raw}")
        return Fraction(numerator, 2 ** log_den)
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return as_angle(raw)
    raise DirectionSetError(f"Bad angle encoding: {raw!r}")


def _encode_node(node: TreeNode) -> dict:
    return {"angle": encode_angle(node.theta), "children": [_encode_node(c) for c in node.children]}


def _decode_node(raw: dict) -> TreeNode:
    try:
        return TreeNode(Direction(decode_angle(raw["angle"])),
                        tuple(_decode_node(c) for c in raw.get("children", [])))
    except (KeyError, TypeError) as e:
        raise DirectionSetError(f"Malformed tree node: {e}") from e


def set_to_dict(dset: DirectionSet) -> dict:
    data = {
        "lambda": str(dset.lam) if isinstance(dset.lam, Fraction) else dset.lam,
        "order": dset.order,
        "root": encode_angle(dset.certificate.root.theta) if dset.certificate else None,
        "angles": [encode_angle(d.theta) for d in dset.directions],
    }
    if dset.certificate is not None:
        data["tree"] = _encode_node(dset.certificate.root)
    return data


def set_from_dict(data: dict) -> DirectionSet:
    try:
        angles = tuple(Direction(decode_angle(a)) for a in data["angles"])
    except (KeyError, TypeError) as e:
        raise DirectionSetError(f"Malformed direction set: {e}") from e
    if data.get("tree") is None:
        return DirectionSet(angles)
    try:
        lam = as_angle(data["lambda"])
        order = int(data["order"])
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as e:
        raise DirectionSetError(f"Malformed certificate header: {e}") from e
    tree = LacunaryTree(_decode_node(data["tree"]), lam, order)
    flat = tree.flatten()
    if tuple(flat) != tuple(sorted(angles, reverse=True)):
        raise DirectionSetError("Angle list disagrees with the certificate tree")
    return DirectionSet(tuple(flat), tree)


def save_set(dset: DirectionSet, path: Union[str, Path]):
    """以 JSON 原子寫入方向集合"""
    atomic_write_text(path, json.dumps(set_to_dict(dset), indent=2))
    logger.info(f"Saved direction set ({dset.describe()}) to {path}")


def load_set(path: Union[str, Path]) -> DirectionSet:
    """讀取方向集合；格式錯誤時拋出 DirectionSetError，檔案不存在時拋出 OSError"""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DirectionSetError(f"Invalid JSON in {path}: {e}") from e
    return set_from_dict(data)
