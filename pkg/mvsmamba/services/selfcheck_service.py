"""
Selfcheck Service Layer
Runs the invariant suite and reports pass/fail per item plus the parameter count
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from mvsmamba.config.constants import ARRANGEMENT_KINDS, DIRECTIONS
from mvsmamba.config.run_config import RunConfig
from mvsmamba.models.dynscan import DMModule, ScanStrategy, SDMModule, check_partition, inverse_scan, scan_layout, skip_scan
from mvsmamba.models.mvs import CameraView, CostRegNet, MVSMambaModel, group_correlation, homography_warp, regularize
from mvsmamba.models.ssm import MambaParams, kernel_convolve, mamba_block, scan_recurrence
from mvsmamba.numeric import check_parameters, no_tape, set_default_dtype
from mvsmamba.numeric.tensor import Tensor
from mvsmamba.utils.exceptions import MVSMambaError

logger = logging.getLogger(__name__)

GRID_SIZES = (2, 4, 6, 8)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ''


@dataclass
class SelfcheckReport:
    items: List[CheckResult] = field(default_factory=list)
    parameters: Dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.items)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 3

    def to_text(self) -> str:
        lines = [f"[{'PASS' if i.passed else 'FAIL'}] {i.name}: {i.detail}" for i in self.items]
        if self.parameters:
            lines.append(f"parameters: {sum(self.parameters.values())} total")
            lines += [f"  {name}: {count}" for name, count in self.parameters.items()]
        lines.append('all checks passed' if self.passed else 'SELFCHECK FAILED')
        return '\n'.join(lines) + '\n'


def _arrangement_shape(kind: str, h: int, w: int) -> Tuple[int, int]:
    return (h, 2 * w) if kind in ('HR', 'HL') else (2 * h, w)


def _ref_mask(kind: str, h: int, w: int, centering: str) -> np.ndarray:
    mask = np.zeros(_arrangement_shape(kind, h, w), dtype=bool)
    lead_first = kind in ('HR', 'VB')
    if centering == 'source':
        lead_first = not lead_first
    if kind in ('HR', 'HL'):
        mask[:, :w] = lead_first
        mask[:, w:] = not lead_first
    else:
        mask[:h] = lead_first
        mask[h:] = not lead_first
    return mask


def check_scan_partition(strategy: ScanStrategy) -> str:
    cases = 0
    for h in GRID_SIZES:
        for w in GRID_SIZES:
            for k in range(1, 5):
                check_partition([strategy.start(d, k) for d in range(1, 5)])
                ref_count = np.zeros((h, w), dtype=int)
                src_count = np.zeros((h, w), dtype=int)
                for d, kind in enumerate(ARRANGEMENT_KINDS, start=1):
                    shape = _arrangement_shape(kind, h, w)
                    layout = scan_layout(shape, DIRECTIONS[d - 1], strategy.start(d, k), strategy.zigzag)
                    count = np.zeros(shape, dtype=int)
                    count[layout.rows, layout.cols] += 1
                    ref = _ref_mask(kind, h, w, strategy.centering)
                    ref_count += count[ref].reshape(h, w)
                    src_count += count[~ref].reshape(h, w)
                if not (np.all(ref_count == 1) and np.all(src_count == 1)):
                    raise AssertionError(f"coverage broken at h={h}, w={w}, k={k}")
                cases += 1
    return f"{cases} arrangement sets cover every pixel once"


def check_round_trip(strategy: ScanStrategy) -> str:
    rng = np.random.default_rng(0)
    for h in GRID_SIZES:
        for w in GRID_SIZES:
            grid = Tensor(rng.standard_normal((2, h, w)))
            total = np.zeros_like(grid.data)
            for d, direction in enumerate(DIRECTIONS, start=1):
                seq = skip_scan(grid, direction, strategy.start(d, 1), zigzag=strategy.zigzag)
                total += inverse_scan(seq, grid.shape).data
            if not np.array_equal(total, grid.data):
                raise AssertionError(f"reassembly differs at h={h}, w={w}")

    dm = DMModule(rng, 4, strategy=strategy, d_state=2, expand=1)
    dm.identity_()
    sdm = SDMModule(rng, 4, strategy=strategy, d_state=2, expand=1)
    sdm.identity_()
    ref, srcs = Tensor(rng.uniform(-1, 1, (4, 4, 6))), [Tensor(rng.uniform(-1, 1, (4, 4, 6))) for _ in range(2)]
    with no_tape():
        ref_enh, srcs_enh = dm(ref, srcs)
        sdm_out = sdm(ref)
    exact = (np.array_equal(ref_enh.data, ref.data) and np.array_equal(sdm_out.data, ref.data)
             and all(np.array_equal(a.data, b.data) for a, b in zip(srcs_enh, srcs)))
    if not exact:
        raise AssertionError("identity DM/SDM is not an exact identity")
    return "inverse scans reassemble every map; identity DM/SDM exact"


def check_precedence(strategy: ScanStrategy) -> str:
    if strategy.centering != 'reference':
        return "skipped for source-centered arrangements"
    rng = np.random.default_rng(1)
    for _ in range(200):
        h, w = 2 * rng.integers(1, 6, size=2)
        k = int(rng.integers(1, 17))
        for d, kind in enumerate(ARRANGEMENT_KINDS, start=1):
            shape = _arrangement_shape(kind, h, w)
            layout = scan_layout(shape, DIRECTIONS[d - 1], strategy.start(d, k), strategy.zigzag)
            in_ref = _ref_mask(kind, h, w, 'reference')[layout.rows, layout.cols]
            order = np.arange(len(layout))
            if order[in_ref].max() >= order[~in_ref].min():
                raise AssertionError(f"{kind}/{DIRECTIONS[d - 1]} visits a source pixel first (h={h}, w={w}, k={k})")
    return "200 random cases scan reference before source"


def check_start_cycling(strategy: ScanStrategy) -> str:
    for k in range(1, 17):
        starts = [strategy.start(d, k) for d in range(1, 5)]
        check_partition(starts)
        if set(starts) != {(0, 0), (0, 1), (1, 0), (1, 1)}:
            raise AssertionError(f"k={k} does not cover all parities")
        if strategy.dynamic and starts != [strategy.start(d, k + 4) for d in range(1, 5)]:
            raise AssertionError(f"period 4 broken at k={k}")
    return "period 4 and parity bijection for k = 1..16"


def check_ssm_equivalence() -> str:
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(10):
        length, channels, n = int(rng.integers(1, 65)), int(rng.integers(1, 5)), int(rng.integers(1, 9))
        x = rng.standard_normal((length, channels))
        delta = np.tile(rng.uniform(0.01, 0.5, channels), (length, 1))
        A = -rng.uniform(0.5, 2.0, (channels, n))
        B = np.tile(rng.standard_normal(n), (length, 1))
        C = np.tile(rng.standard_normal(n), (length, 1))
        D = rng.standard_normal(channels)
        with no_tape():
            y_rec = scan_recurrence(x, delta, A, B, C, D).data
        Abar = np.exp(delta[0][:, None] * A)
        Bbar = delta[0][:, None] * B[0][None, :]
        y_ker = kernel_convolve(x, Abar, Bbar, C[0], D).data
        worst = max(worst, float(np.abs(y_rec - y_ker).max()))
    if worst >= 1e-10:
        raise AssertionError(f"max deviation {worst:.3e}")
    return f"recurrence vs kernel max deviation {worst:.2e}"


def check_gradients(strategy: Optional[ScanStrategy] = None) -> str:
    rng = np.random.default_rng(3)
    errors: Dict[str, float] = {}

    params = MambaParams(rng, 4, d_state=3)
    seq = Tensor(rng.standard_normal((8, 4)))
    weights = Tensor(rng.standard_normal((8, 4)))
    errors['mamba_block'] = check_parameters(lambda: (mamba_block(seq, params) * weights).sum(),
                                             params.parameters() + [seq], max_coords=6)

    dm = DMModule(rng, 4, strategy=strategy, d_state=2, expand=1)
    ref_map = Tensor(rng.uniform(-1, 1, (4, 4, 4)))
    src_maps = [Tensor(rng.uniform(-1, 1, (4, 4, 4))) for _ in range(2)]

    def dm_loss():
        ref_enh, srcs_enh = dm(ref_map, src_maps)
        total = ref_enh.sum()
        for out in srcs_enh:
            total = total + out.sum()
        return total

    errors['dm_module'] = check_parameters(dm_loss, dm.parameters(), max_coords=4)

    sdm = SDMModule(rng, 4, strategy=strategy, d_state=2, expand=1)
    errors['sdm_module'] = check_parameters(lambda: sdm(ref_map).sum(), sdm.parameters(), max_coords=4)

    ref = Tensor(rng.standard_normal((8, 3, 4)))
    warped = Tensor(rng.standard_normal((8, 2, 3, 4)))
    corr_w = Tensor(rng.standard_normal((4, 2, 3, 4)))
    errors['group_correlation'] = check_parameters(lambda: (group_correlation(ref, warped, 4) * corr_w).sum(),
                                                   [ref, warped])

    feat = Tensor(rng.standard_normal((2, 8, 10)))
    K = np.array([[9.0, 0.0, 4.5], [0.0, 9.0, 3.5], [0.0, 0.0, 1.0]])
    ref_cam = CameraView(K=K, R=np.eye(3), t=np.zeros(3), depth_range=(2.0, 8.0))
    src_cam = CameraView(K=K, R=np.eye(3), t=np.array([0.37, -0.21, 0.05]), depth_range=(2.0, 8.0))
    hyps = np.broadcast_to(np.linspace(3.0, 7.0, 3)[:, None, None], (3, 8, 10)).copy()
    warp_w = Tensor(rng.standard_normal((2, 3, 8, 10)))
    errors['homography_warp'] = check_parameters(
        lambda: (homography_warp(feat, ref_cam, src_cam, hyps)[0] * warp_w).sum(), [feat], max_coords=20)

    net = CostRegNet(rng, 4, base_channels=2)
    net.prob.weight.data[...] = rng.standard_normal(net.prob.weight.shape) * 0.5
    volume = Tensor(rng.standard_normal((4, 4, 4, 4)))
    prob_w = Tensor(rng.standard_normal((4, 4, 4)))
    errors['regularize'] = check_parameters(lambda: (regularize(volume, net) * prob_w).sum(),
                                            [volume, net.prob.weight, net.conv0.conv.weight], max_coords=6)

    worst = max(errors, key=errors.get)
    if errors[worst] >= 1e-4:
        raise AssertionError(f"{worst} relative error {errors[worst]:.3e}")
    return ', '.join(f"{name} {err:.1e}" for name, err in errors.items())


def check_warp_identity() -> str:
    rng = np.random.default_rng(4)
    feat = Tensor(rng.standard_normal((3, 8, 10)))
    K = np.array([[9.0, 0.0, 4.5], [0.0, 9.0, 3.5], [0.0, 0.0, 1.0]])
    cam = CameraView(K=K, R=np.eye(3), t=np.zeros(3), depth_range=(2.0, 8.0))
    hyps = np.broadcast_to(np.linspace(2.0, 8.0, 5)[:, None, None], (5, 8, 10)).copy()
    with no_tape():
        warped, mask = homography_warp(feat, cam, cam, hyps)
    err = float(np.abs(warped.data - feat.data[:, None]).max())
    if not mask.all() or err > 1e-12:
        raise AssertionError(f"identity warp deviation {err:.3e}, valid {mask.mean():.3f}")
    return "identical cameras warp to the source feature"


def check_probability() -> str:
    rng = np.random.default_rng(5)
    net = CostRegNet(rng, 4)
    net.prob.weight.data[...] = rng.standard_normal(net.prob.weight.shape) * 0.1
    with no_tape():
        prob = regularize(Tensor(rng.standard_normal((4, 8, 6, 10))), net).data
    dev = float(np.abs(prob.sum(axis=0) - 1.0).max())
    if dev > 1e-6:
        raise AssertionError(f"max deviation {dev:.3e}")
    return f"probabilities sum to one (max deviation {dev:.1e})"


class SelfcheckService:
    """Service for the invariant suite"""

    @staticmethod
    def run(cfg: RunConfig, strategy: Optional[ScanStrategy] = None) -> SelfcheckReport:
        """
        Run every check; failures are report content, never exceptions

        Args:
            cfg: Run configuration (scan flags and model shape)
            strategy: Optional scan strategy override, e.g. with a different start table
        """
        set_default_dtype('float64')
        strategy = strategy or ScanStrategy(centering=cfg.scan.centering, dynamic=cfg.scan.dynamic,
                                            zigzag=cfg.scan.zigzag)
        checks: List[Tuple[str, Callable[[], str]]] = [
            ('scan partition', lambda: check_scan_partition(strategy)),
            ('scan round trip', lambda: check_round_trip(strategy)),
            ('reference precedence', lambda: check_precedence(strategy)),
            ('start-coordinate cycling', lambda: check_start_cycling(strategy)),
            ('ssm equivalence', check_ssm_equivalence),
            ('gradient checks', lambda: check_gradients(strategy)),
            ('warp identity', check_warp_identity),
            ('probability normalisation', check_probability),
        ]

        report = SelfcheckReport()
        for name, fn in checks:
            try:
                report.items.append(CheckResult(name, True, fn()))
            except (AssertionError, MVSMambaError) as e:
                detail = e.message if isinstance(e, MVSMambaError) else str(e)
                report.items.append(CheckResult(name, False, detail))
                logger.error(f"Selfcheck failed: {name}: {detail}")

        model = MVSMambaModel.from_config(cfg, np.random.default_rng(cfg.train.seed))
        report.parameters = model.component_parameters()
        return report
