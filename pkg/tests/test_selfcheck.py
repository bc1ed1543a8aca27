"""
Tests for the invariant suite
"""

from dataclasses import replace

from mvsmamba.models.dynscan import ScanStrategy
from mvsmamba.services import SelfcheckService
from mvsmamba.services.selfcheck_service import check_gradients, check_precedence, check_start_cycling


def test_pristine_build_passes(tiny_config):
    report = SelfcheckService.run(tiny_config)
    assert report.passed, report.to_text()
    assert report.exit_code == 0
    assert set(report.parameters) == {'fpn', 'dm', 'sdm', 'fusion', 'regularizer'}
    assert report.to_text().rstrip().endswith('all checks passed')


def test_zigzag_traversal_passes(tiny_config):
    cfg = replace(tiny_config, scan=replace(tiny_config.scan, zigzag=True))
    report = SelfcheckService.run(cfg)
    assert report.passed, report.to_text()


def test_corrupted_start_table_fails(tiny_config):
    broken = ScanStrategy(table=((1, 0), (1, 0), (0, 1), (1, 1)))
    report = SelfcheckService.run(tiny_config, strategy=broken)
    assert not report.passed
    assert report.exit_code == 3
    failed = {item.name for item in report.items if not item.passed}
    assert {'scan partition', 'scan round trip', 'start-coordinate cycling'} <= failed
    assert 'SELFCHECK FAILED' in report.to_text()


def test_static_starts_skip_the_period_check():
    assert 'period 4' in check_start_cycling(ScanStrategy(dynamic=False))


def test_source_centering_skips_precedence():
    assert 'skipped' in check_precedence(ScanStrategy(centering='source'))


def test_gradient_suite_covers_every_differentiable_stage():
    detail = check_gradients()
    for name in ('mamba_block', 'dm_module', 'sdm_module', 'group_correlation', 'homography_warp', 'regularize'):
        assert name in detail
