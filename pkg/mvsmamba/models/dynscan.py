"""
Dynamic Scanning
Reference-centered arrangements, stride-2 directional skip scans with rotating start
coordinates, scatter-back, merging, and the DM / SDM feature-enhancement modules
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from mvsmamba.config.constants import (
    ARRANGEMENT_KINDS,
    CONV_KERNEL,
    D_STATE,
    DIRECTIONS,
    ERROR_MESSAGES,
    EXPAND,
    START_TABLE,
)
from mvsmamba.models.layers import MLP, LayerNorm, Module
from mvsmamba.models.ssm import MambaParams, mamba_block
from mvsmamba.numeric import ops
from mvsmamba.numeric.tensor import Tensor, as_tensor
from mvsmamba.utils.exceptions import ArgumentError, InvariantViolationError

logger = logging.getLogger(__name__)

Region = Tuple[slice, slice, slice]
Parity = Tuple[int, int]

CENTERINGS = ('reference', 'source')


@dataclass
class Arrangement:
    """A reference/source pair concatenated into one map; regions index that map"""
    kind: str
    map: Tensor
    ref_region: Region
    src_region: Region

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.map.shape


@dataclass
class ScanLayout:
    direction: str
    start: Parity
    rows: np.ndarray
    cols: np.ndarray
    step: int = 2

    def __len__(self) -> int:
        return int(self.rows.size)

    @property
    def positions(self) -> List[Tuple[int, int]]:
        return list(zip(self.rows.tolist(), self.cols.tolist()))

    @property
    def index(self) -> Tuple[slice, np.ndarray, np.ndarray]:
        return (slice(None), self.rows, self.cols)


@dataclass
class DirSeq:
    values: Tensor
    layout: ScanLayout
    arrangement_kind: Optional[str] = None


@dataclass
class ScatteredMap:
    """A scan's output written back onto its arrangement grid"""
    arrangement: Arrangement
    map: Tensor
    layout: ScanLayout


def _check_pair(ref: Tensor, src: Tensor) -> None:
    if ref.shape != src.shape or ref.ndim != 3:
        raise ArgumentError(
            ERROR_MESSAGES['SHAPE_MISMATCH'],
            details={"ref": list(ref.shape), "src": list(src.shape)}
        )
    _check_even(ref.shape)


def _check_even(shape: Sequence[int]) -> None:
    h, w = shape[-2], shape[-1]
    if h % 2 or w % 2 or h == 0 or w == 0:
        raise ArgumentError(ERROR_MESSAGES['ODD_EXTENT'], details={"height": h, "width": w})


def arrange(ref: Tensor, src: Tensor, centering: str = 'reference') -> Tuple[Arrangement, ...]:
    """
    Build the four concatenations HR, HL, VB, VT of a reference/source pair

    HR puts the reference left, HL right, VB on top and VT at the bottom.
    With centering='source' the two views swap places in every kind.

    Raises:
        ArgumentError: On shape mismatch or odd extents
    """
    ref, src = as_tensor(ref), as_tensor(src)
    _check_pair(ref, src)
    if centering not in CENTERINGS:
        raise ArgumentError(f"Unknown centering: {centering}", details={"allowed": list(CENTERINGS)})
    if centering == 'source':
        lead, tail = src, ref
    else:
        lead, tail = ref, src

    _, h, w = ref.shape
    every = slice(None)
    first_h, second_h = (every, every, slice(0, w)), (every, every, slice(w, 2 * w))
    first_v, second_v = (every, slice(0, h), every), (every, slice(h, 2 * h), every)

    layouts = {
        'HR': (ops.concat([lead, tail], axis=2), first_h, second_h),
        'HL': (ops.concat([tail, lead], axis=2), second_h, first_h),
        'VB': (ops.concat([lead, tail], axis=1), first_v, second_v),
        'VT': (ops.concat([tail, lead], axis=1), second_v, first_v),
    }

    arrangements = []
    for kind in ARRANGEMENT_KINDS:
        grid, lead_region, tail_region = layouts[kind]
        if centering == 'source':
            lead_region, tail_region = tail_region, lead_region
        arrangements.append(Arrangement(kind, grid, ref_region=lead_region, src_region=tail_region))
    return tuple(arrangements)


def start_coords(direction_index: int, source_index: int,
                 table: Sequence[Parity] = START_TABLE) -> Parity:
    """
    Parity offset for direction d (1..4) on the k-th source (k >= 1)

    The base table is rotated by k - 1, so one source's four directions get four
    distinct parities and the assignment cycles with period four over sources.

    Raises:
        ArgumentError: If d is outside 1..4 or k < 1
    """
    if direction_index not in (1, 2, 3, 4):
        raise ArgumentError(ERROR_MESSAGES['BAD_DIRECTION'], details={"direction_index": direction_index})
    if source_index < 1:
        raise ArgumentError("Source index must be at least 1", details={"source_index": source_index})
    return tuple(table[(direction_index - 1 + source_index - 1) % 4])


def scan_layout(shape: Sequence[int], direction: str, start: Parity, zigzag: bool = False) -> ScanLayout:
    """
    Visit order of the parity sublattice {(h0 + 2i, w0 + 2j)} of an H x W grid

    N walks columns left to right, iN right to left (top to bottom inside a column);
    Z walks rows top to bottom, iZ bottom to top (left to right inside a row).
    zigzag reverses the inner walk on every other line.
    """
    if direction not in DIRECTIONS:
        raise ArgumentError(ERROR_MESSAGES['BAD_DIRECTION'], details={"direction": direction})
    height, width = shape[-2], shape[-1]
    h0, w0 = start
    sub_rows = np.arange(h0, height, 2)
    sub_cols = np.arange(w0, width, 2)

    column_major = direction in ('N', 'iN')
    if direction == 'iN':
        sub_cols = sub_cols[::-1]
    elif direction == 'iZ':
        sub_rows = sub_rows[::-1]

    outer, inner = (sub_cols, sub_rows) if column_major else (sub_rows, sub_cols)
    outer_idx = np.repeat(outer, inner.size)
    inner_grid = np.tile(inner, (outer.size, 1))
    if zigzag:
        inner_grid[1::2] = inner_grid[1::2, ::-1]
    inner_idx = inner_grid.reshape(-1)

    rows, cols = (inner_idx, outer_idx) if column_major else (outer_idx, inner_idx)
    return ScanLayout(direction=direction, start=(int(h0), int(w0)), rows=rows, cols=cols)


def _as_map(arr: Union[Arrangement, Tensor]) -> Tuple[Tensor, Optional[str]]:
    if isinstance(arr, Arrangement):
        return arr.map, arr.kind
    return as_tensor(arr), None


def skip_scan(arr: Union[Arrangement, Tensor], direction: str, start: Parity,
              zigzag: bool = False) -> DirSeq:
    """Gather one parity class of a [C, H', W'] map into a [L, C] sequence"""
    grid, kind = _as_map(arr)
    _check_even(grid.shape)
    layout = scan_layout(grid.shape, direction, start, zigzag=zigzag)
    gathered = ops.getitem(grid, layout.index)
    return DirSeq(values=ops.transpose(gathered), layout=layout, arrangement_kind=kind)


def inverse_scan(seq: DirSeq, shape: Sequence[int]) -> Tensor:
    """
    Scatter a sequence back onto a zero map of the given [C, H', W'] shape

    Raises:
        ArgumentError: If the sequence length does not match its layout
    """
    values = as_tensor(seq.values)
    if values.ndim != 2 or values.shape[0] != len(seq.layout) or values.shape[1] != shape[0]:
        raise ArgumentError(
            ERROR_MESSAGES['SHAPE_MISMATCH'],
            details={"values": list(values.shape), "layout_length": len(seq.layout),
                     "target": list(shape)}
        )
    return ops.scatter(ops.transpose(values), seq.layout.index, tuple(shape))


def check_partition(starts: Sequence[Parity]) -> None:
    """
    Raises:
        InvariantViolationError: If two scans share a parity class
    """
    if len(set(map(tuple, starts))) != len(starts):
        raise InvariantViolationError(
            ERROR_MESSAGES['PARITY_COLLISION'],
            details={"starts": [list(s) for s in starts]}
        )


def merge(pieces: Sequence[ScatteredMap]) -> Tuple[Tensor, Tensor]:
    """
    Reassemble (ref_enh, src_enh) from the four scattered arrangement maps

    Every piece contributes its recorded ref/src regions; four distinct parities
    make the sum an exact partition.

    Raises:
        InvariantViolationError: If two pieces share a parity class
    """
    check_partition([p.layout.start for p in pieces])
    ref_enh = None
    src_enh = None
    for piece in pieces:
        ref_part = ops.getitem(piece.map, piece.arrangement.ref_region)
        src_part = ops.getitem(piece.map, piece.arrangement.src_region)
        ref_enh = ref_part if ref_enh is None else ref_enh + ref_part
        src_enh = src_part if src_enh is None else src_enh + src_part
    return ref_enh, src_enh


def visit_order(layout: ScanLayout, shape: Sequence[int]) -> np.ndarray:
    """Integer map of sequence indices, -1 off the layout's parity class"""
    order = np.full((shape[-2], shape[-1]), -1, dtype=np.int64)
    order[layout.rows, layout.cols] = np.arange(len(layout))
    return order


@dataclass(frozen=True)
class ScanStrategy:
    """
    How a feature pair is arranged and traversed

    The default is reference-centered with per-source start rotation; the other
    fields select the concatenation and static-start ablations.
    """
    centering: str = 'reference'
    dynamic: bool = True
    zigzag: bool = False
    table: Tuple[Parity, ...] = field(default=START_TABLE)

    def start(self, direction_index: int, source_index: int) -> Parity:
        k = source_index if self.dynamic else 1
        return start_coords(direction_index, k, self.table)

    def arrange(self, ref: Tensor, src: Tensor) -> Tuple[Arrangement, ...]:
        return arrange(ref, src, centering=self.centering)

    def scan(self, arr: Union[Arrangement, Tensor], direction_index: int, source_index: int) -> DirSeq:
        direction = DIRECTIONS[direction_index - 1]
        return skip_scan(arr, direction, self.start(direction_index, source_index), zigzag=self.zigzag)


class _DirectionalEnhancer(Module):
    """Four direction-specific Mamba blocks plus the shared residual MLP refinement"""

    def __init__(self, rng: np.random.Generator, channels: int, strategy: Optional[ScanStrategy] = None,
                 d_state: int = D_STATE, expand: int = EXPAND, conv_kernel: int = CONV_KERNEL,
                 mlp_ratio: int = 2, use_mlp: bool = True, share_weights: bool = False,
                 zoh_input: bool = False):
        self.strategy = strategy or ScanStrategy()
        if share_weights:
            shared = MambaParams(rng, channels, d_state, expand, conv_kernel, zoh_input)
            self.blocks = [shared] * 4
        else:
            self.blocks = [MambaParams(rng, channels, d_state, expand, conv_kernel, zoh_input)
                           for _ in range(4)]
        self.mlp = MLP(rng, channels, mlp_ratio) if use_mlp else None
        self.norm = LayerNorm(channels) if use_mlp else None

    def enhance(self, seq: Tensor, direction_index: int) -> Tensor:
        out = mamba_block(seq, self.blocks[direction_index - 1])
        if self.mlp is not None:
            out = out + self.norm(self.mlp(out))
        return out

    def identity_(self) -> None:
        """Zero every output path so the module passes features through unchanged"""
        for block in self.blocks:
            block.zero_output_()
        if self.mlp is not None:
            self.mlp.zero_output_()


class DMModule(_DirectionalEnhancer):
    """Pairwise reference/source enhancement over all source views"""

    def forward(self, ref: Tensor, srcs: Sequence[Tensor]) -> Tuple[Tensor, List[Tensor]]:
        if len(srcs) == 0:
            raise ArgumentError(ERROR_MESSAGES['NO_SOURCES'])

        ref_parts = []
        src_out = []
        for k, src in enumerate(srcs, start=1):
            pieces = []
            for d, arrangement in enumerate(self.strategy.arrange(ref, src), start=1):
                seq = self.strategy.scan(arrangement, d, k)
                enhanced = DirSeq(self.enhance(seq.values, d), seq.layout, seq.arrangement_kind)
                pieces.append(ScatteredMap(arrangement, inverse_scan(enhanced, arrangement.shape), seq.layout))
            ref_k, src_k = merge(pieces)
            ref_parts.append(ref_k)
            src_out.append(src_k)

        # offset form keeps the mean of equal parts bit-exact
        ref_enh = ref_parts[0]
        if len(ref_parts) > 1:
            offset = ref_parts[1] - ref_parts[0]
            for part in ref_parts[2:]:
                offset = offset + (part - ref_parts[0])
            ref_enh = ref_parts[0] + offset / len(ref_parts)
        return ref_enh, src_out


class SDMModule(_DirectionalEnhancer):
    """Single-view enhancement: four directional scans of one map, summed back"""

    def forward(self, feat: Tensor) -> Tensor:
        feat = as_tensor(feat)
        _check_even(feat.shape)
        starts = [self.strategy.start(d, 1) for d in range(1, 5)]
        check_partition(starts)

        out = None
        for d in range(1, 5):
            seq = self.strategy.scan(feat, d, 1)
            enhanced = DirSeq(self.enhance(seq.values, d), seq.layout)
            part = inverse_scan(enhanced, feat.shape)
            out = part if out is None else out + part
        return out


def dm_module(ref: Tensor, srcs: Sequence[Tensor], module: DMModule) -> Tuple[Tensor, List[Tensor]]:
    return module(ref, srcs)


def sdm_module(feat: Tensor, module: SDMModule) -> Tensor:
    return module(feat)
