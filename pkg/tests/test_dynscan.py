"""
Tests for arrangements, skip scans, start coordinates, merging and the DM/SDM modules
"""

import numpy as np
import pytest

from mvsmamba.config.constants import ARRANGEMENT_KINDS, DIRECTIONS, START_TABLE
from mvsmamba.models.dynscan import (
    DirSeq,
    DMModule,
    ScanStrategy,
    ScatteredMap,
    SDMModule,
    arrange,
    check_partition,
    dm_module,
    inverse_scan,
    merge,
    scan_layout,
    sdm_module,
    skip_scan,
    start_coords,
)
from mvsmamba.numeric import Tensor, check_parameters, no_tape
from mvsmamba.utils.exceptions import ArgumentError, InvariantViolationError

SIZES = (2, 4, 6, 8)


def _pair(rng, channels=2, h=4, w=4):
    return Tensor(rng.uniform(-1, 1, (channels, h, w))), Tensor(rng.uniform(-1, 1, (channels, h, w)))


def test_horizontal_arrangement_block_placement():
    ref, src = Tensor(np.ones((1, 2, 2))), Tensor(np.full((1, 2, 2), 2.0))
    hr, hl, vb, vt = arrange(ref, src)
    np.testing.assert_array_equal(hr.map.data[0, 0], [1, 1, 2, 2])
    np.testing.assert_array_equal(hl.map.data[0, 0], [2, 2, 1, 1])
    np.testing.assert_array_equal(vb.map.data[0, :, 0], [1, 1, 2, 2])
    np.testing.assert_array_equal(vt.map.data[0, :, 0], [2, 2, 1, 1])


def test_regions_recover_both_views(rng):
    ref, src = _pair(rng, h=4, w=6)
    for arr in arrange(ref, src):
        np.testing.assert_array_equal(arr.map.data[arr.ref_region], ref.data)
        np.testing.assert_array_equal(arr.map.data[arr.src_region], src.data)
        assert arr.map.size == 2 * ref.size


def test_source_centering_swaps_blocks(rng):
    ref, src = _pair(rng)
    hr = arrange(ref, src, centering='source')[0]
    np.testing.assert_array_equal(hr.map.data[:, :, :4], src.data)
    np.testing.assert_array_equal(hr.map.data[hr.ref_region], ref.data)


@pytest.mark.parametrize('ref_shape, src_shape', [((1, 2, 2), (1, 2, 4)), ((1, 3, 2), (1, 3, 2))])
def test_arrange_rejects_bad_shapes(ref_shape, src_shape):
    with pytest.raises(ArgumentError):
        arrange(Tensor(np.zeros(ref_shape)), Tensor(np.zeros(src_shape)))


def test_start_coordinate_table():
    assert [start_coords(d, 1) for d in range(1, 5)] == [(1, 0), (0, 0), (0, 1), (1, 1)]
    assert start_coords(2, 1) == (0, 0)
    assert start_coords(1, 2) == (0, 0)
    assert start_coords(1, 5) == (1, 0)


def test_start_coordinates_cycle_and_partition():
    for k in range(1, 17):
        starts = [start_coords(d, k) for d in range(1, 5)]
        assert set(starts) == {(0, 0), (0, 1), (1, 0), (1, 1)}
        assert starts == [start_coords(d, k + 4) for d in range(1, 5)]


@pytest.mark.parametrize('d, k', [(0, 1), (5, 1), (1, 0)])
def test_start_coordinates_reject_bad_indices(d, k):
    with pytest.raises(ArgumentError):
        start_coords(d, k)


def test_static_strategy_reuses_first_row():
    strategy = ScanStrategy(dynamic=False)
    assert [strategy.start(d, 3) for d in range(1, 5)] == [start_coords(d, 1) for d in range(1, 5)]


def test_skip_scan_hand_enumeration():
    ref = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    src = Tensor(np.array([[[5.0, 6.0], [7.0, 8.0]]]))
    hr = arrange(ref, src)[0]

    seq = skip_scan(hr, 'N', (0, 0))
    assert seq.layout.positions == [(0, 0), (0, 2)]
    np.testing.assert_array_equal(seq.values.data[:, 0], [1, 5])

    seq = skip_scan(hr, 'N', (1, 1))
    assert seq.layout.positions == [(1, 1), (1, 3)]
    np.testing.assert_array_equal(seq.values.data[:, 0], [4, 8])


def test_direction_orders_on_a_square_sublattice():
    assert scan_layout((4, 4), 'N', (0, 0)).positions == [(0, 0), (2, 0), (0, 2), (2, 2)]
    assert scan_layout((4, 4), 'iN', (0, 0)).positions == [(0, 2), (2, 2), (0, 0), (2, 0)]
    assert scan_layout((4, 4), 'Z', (0, 0)).positions == [(0, 0), (0, 2), (2, 0), (2, 2)]
    assert scan_layout((4, 4), 'iZ', (0, 0)).positions == [(2, 0), (2, 2), (0, 0), (0, 2)]


def test_zigzag_reverses_every_other_line():
    assert scan_layout((4, 4), 'Z', (0, 0), zigzag=True).positions == [(0, 0), (0, 2), (2, 2), (2, 0)]


def test_unknown_direction_is_rejected():
    with pytest.raises(ArgumentError):
        scan_layout((4, 4), 'X', (0, 0))


@pytest.mark.parametrize('zigzag', [False, True])
def test_sequence_length_is_a_quarter(rng, zigzag):
    for h in SIZES:
        for w in SIZES:
            for direction in DIRECTIONS:
                seq = skip_scan(Tensor(rng.standard_normal((3, h, w))), direction, (1, 0), zigzag=zigzag)
                assert seq.values.shape == (h * w // 4, 3)


@pytest.mark.parametrize('zigzag', [False, True])
def test_four_parities_reassemble_any_map(rng, zigzag):
    for h in SIZES:
        for w in SIZES:
            grid = Tensor(rng.standard_normal((2, h, w)))
            total = np.zeros_like(grid.data)
            for direction, start in zip(DIRECTIONS, START_TABLE):
                total += inverse_scan(skip_scan(grid, direction, start, zigzag=zigzag), grid.shape).data
            np.testing.assert_array_equal(total, grid.data)


def test_inverse_scan_scatters_into_zeros():
    ref = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    src = Tensor(np.array([[[5.0, 6.0], [7.0, 8.0]]]))
    hr = arrange(ref, src)[0]
    out = inverse_scan(skip_scan(hr, 'N', (0, 0)), hr.shape).data
    expected = np.zeros((1, 2, 4))
    expected[0, 0, 0], expected[0, 0, 2] = 1.0, 5.0
    np.testing.assert_array_equal(out, expected)


def test_inverse_scan_rejects_length_mismatch():
    seq = skip_scan(Tensor(np.zeros((1, 4, 4))), 'Z', (0, 0))
    bad = DirSeq(Tensor(np.zeros((3, 1))), seq.layout)
    with pytest.raises(ArgumentError):
        inverse_scan(bad, (1, 4, 4))


@pytest.mark.parametrize('zigzag', [False, True])
def test_reference_precedes_source(zigzag):
    rng = np.random.default_rng(7)
    strategy = ScanStrategy(zigzag=zigzag)
    for _ in range(200):
        h, w = (2 * rng.integers(1, 6, size=2)).tolist()
        k = int(rng.integers(1, 17))
        ref = Tensor(np.zeros((1, h, w)))
        src = Tensor(np.ones((1, h, w)))
        for d, arr in enumerate(strategy.arrange(ref, src), start=1):
            values = strategy.scan(arr, d, k).values.data[:, 0]
            first_src = int(np.argmax(values == 1.0))
            assert np.all(values[:first_src] == 0.0) and np.all(values[first_src:] == 1.0)


def _scatter_pieces(ref, src, k, strategy=None):
    strategy = strategy or ScanStrategy()
    pieces = []
    for d, arr in enumerate(strategy.arrange(ref, src), start=1):
        seq = strategy.scan(arr, d, k)
        pieces.append(ScatteredMap(arr, inverse_scan(seq, arr.shape), seq.layout))
    return pieces


@pytest.mark.parametrize('k', [1, 2, 3, 4])
def test_merge_of_untouched_scans_is_exact(rng, k):
    ref, src = _pair(rng, h=6, w=4)
    ref_enh, src_enh = merge(_scatter_pieces(ref, src, k))
    np.testing.assert_array_equal(ref_enh.data, ref.data)
    np.testing.assert_array_equal(src_enh.data, src.data)


def test_zeroed_piece_blanks_one_parity_class(rng):
    ref, src = _pair(rng)
    pieces = _scatter_pieces(ref, src, 1)
    pieces[0] = ScatteredMap(pieces[0].arrangement, Tensor(np.zeros(pieces[0].map.shape)), pieces[0].layout)
    ref_enh, _ = merge(pieces)
    h0, w0 = start_coords(1, 1)
    blank = np.zeros(ref.shape[1:], dtype=bool)
    blank[h0::2, w0::2] = True
    assert np.all(ref_enh.data[:, blank] == 0.0)
    np.testing.assert_array_equal(ref_enh.data[:, ~blank], ref.data[:, ~blank])


def test_merge_detects_parity_collision(rng):
    ref, src = _pair(rng)
    broken = ScanStrategy(table=((1, 0), (1, 0), (0, 1), (1, 1)))
    with pytest.raises(InvariantViolationError):
        merge(_scatter_pieces(ref, src, 1, broken))
    with pytest.raises(InvariantViolationError):
        check_partition([(0, 0), (0, 0)])


def test_identity_dm_module_is_exact(rng):
    module = DMModule(rng, 4, d_state=2, expand=1)
    module.identity_()
    ref = Tensor(rng.uniform(-1, 1, (4, 4, 6)))
    srcs = [Tensor(rng.uniform(-1, 1, (4, 4, 6))) for _ in range(3)]
    ref_enh, srcs_enh = dm_module(ref, srcs, module)
    np.testing.assert_array_equal(ref_enh.data, ref.data)
    for out, src in zip(srcs_enh, srcs):
        np.testing.assert_array_equal(out.data, src.data)


def test_identity_dm_module_two_sources_bit_exact(rng):
    module = DMModule(rng, 4, d_state=2, expand=1)
    module.identity_()
    ref = Tensor(rng.uniform(-1, 1, (4, 4, 4)))
    ref_enh, _ = module(ref, [Tensor(rng.uniform(-1, 1, (4, 4, 4))) for _ in range(2)])
    np.testing.assert_array_equal(ref_enh.data, ref.data)


def test_sources_rotate_direction_assignment():
    strategy = ScanStrategy()
    first = [strategy.start(d, 1) for d in range(1, 5)]
    second = [strategy.start(d, 2) for d in range(1, 5)]
    assert all(a != b for a, b in zip(first, second))


def test_dm_module_requires_a_source(rng):
    module = DMModule(rng, 4, d_state=2, expand=1)
    with pytest.raises(ArgumentError):
        module(Tensor(np.zeros((4, 2, 2))), [])


def test_dm_module_gradients(rng):
    module = DMModule(rng, 4, d_state=2, expand=1)
    ref, src_a = _pair(rng, channels=4)
    src_b = Tensor(rng.uniform(-1, 1, (4, 4, 4)))

    def loss():
        ref_enh, srcs_enh = module(ref, [src_a, src_b])
        total = ref_enh.sum()
        for out in srcs_enh:
            total = total + out.sum()
        return total

    assert check_parameters(loss, module.parameters(), max_coords=4) < 1e-4


def test_shared_weights_reuse_one_block(rng):
    module = DMModule(rng, 4, d_state=2, expand=1, share_weights=True)
    separate = DMModule(rng, 4, d_state=2, expand=1)
    assert module.num_parameters() < separate.num_parameters()
    assert all(block is module.blocks[0] for block in module.blocks)


def test_identity_sdm_module_is_exact(rng):
    module = SDMModule(rng, 4, d_state=2, expand=1)
    module.identity_()
    feat = Tensor(rng.uniform(-1, 1, (4, 6, 8)))
    np.testing.assert_array_equal(sdm_module(feat, module).data, feat.data)


def test_sdm_module_output_is_finite(rng):
    module = SDMModule(rng, 4, d_state=2, expand=1)
    with no_tape():
        out = module(Tensor(rng.uniform(-1, 1, (4, 4, 4)))).data
    assert out.shape == (4, 4, 4) and np.isfinite(out).all()


def test_sdm_module_rejects_odd_extent(rng):
    module = SDMModule(rng, 4, d_state=2, expand=1)
    with pytest.raises(ArgumentError):
        module(Tensor(np.zeros((4, 3, 4))))


def test_sdm_without_mlp_has_fewer_parameters(rng):
    with_mlp = SDMModule(rng, 4, d_state=2, expand=1)
    without = SDMModule(rng, 4, d_state=2, expand=1, use_mlp=False)
    assert without.mlp is None and without.num_parameters() < with_mlp.num_parameters()


def test_arrangement_kind_order():
    assert ARRANGEMENT_KINDS == ('HR', 'HL', 'VB', 'VT')
