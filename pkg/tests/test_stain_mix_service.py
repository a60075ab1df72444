from collections import Counter

import numpy as np
import pytest

from histoad.errors import ConfigurationError, ParameterError
from histoad.models.color import ClassHistogram, JitterRanges, StainGroups
from histoad.models.run_config import RunConfig
from histoad.services.stain_mix_service import LEVELS, PSEUDO_COUNT, StainMixService
from histoad.services.synth_service import SynthService


def uniform_hist(low, high):
    hist = np.zeros(LEVELS)
    hist[low:high + 1] = 1.0
    return hist


def test_histogram_of_mid_gray_tiles():
    tiles = np.full((3, 4, 4, 3), 128, dtype=np.uint8)
    (hist,) = StainMixService.build_class_histograms({5: tiles})
    assert hist.class_id == 5
    assert hist.total == 48
    for c in range(3):
        assert hist.counts[c, 128] == 48
        assert hist.counts[c].sum() == 48


def test_histogram_respects_the_sample_budget():
    tiles = np.zeros((10, 2, 2, 3), dtype=np.uint8)
    (hist,) = StainMixService.build_class_histograms({1: tiles}, sample_budget=4)
    assert hist.total == 4 * 4


def test_histogram_of_empty_class_is_rejected():
    with pytest.raises(ParameterError):
        StainMixService.build_class_histograms({1: np.zeros((0, 2, 2, 3), dtype=np.uint8)})


def test_cdf_of_uniform_and_point_mass():
    np.testing.assert_allclose(StainMixService.cdf(np.ones(LEVELS)), (np.arange(LEVELS) + 1) / LEVELS)
    point = np.zeros(LEVELS)
    point[0] = 7
    np.testing.assert_array_equal(StainMixService.cdf(point), np.ones(LEVELS))
    with pytest.raises(ParameterError):
        StainMixService.cdf(np.zeros(LEVELS))


def test_lut_shifts_lower_half_onto_upper_half():
    lut = StainMixService.build_transfer_lut(
        StainMixService.cdf(uniform_hist(0, 127)), StainMixService.cdf(uniform_hist(128, 255))
    )
    np.testing.assert_array_equal(lut[:128], np.arange(128) + 128)


def test_lut_onto_point_mass_is_constant(rng):
    point = np.zeros(LEVELS)
    point[77] = 1.0
    lut = StainMixService.build_transfer_lut(StainMixService.cdf(rng.random(LEVELS) + 0.1), StainMixService.cdf(point))
    np.testing.assert_array_equal(lut, 77)


def test_lut_between_identical_cdfs_is_identity(rng):
    cdf = StainMixService.cdf(rng.random(LEVELS) + 0.05)
    lut = StainMixService.build_transfer_lut(cdf, cdf)
    assert np.abs(lut.astype(int) - np.arange(LEVELS)).max() <= 1
    assert np.all(np.diff(lut.astype(int)) >= 0)


def test_self_tables_are_identity_even_with_empty_levels(rng):
    counts = np.zeros((3, LEVELS), dtype=np.int64)
    counts[:, 100:140] = rng.integers(1, 50, size=(3, 40))
    tables = StainMixService.build_transfer_tables([ClassHistogram(1, counts)], StainGroups({1: (1,)}))
    lut = tables[(1, 1)].lut
    assert np.abs(lut.astype(int) - np.arange(LEVELS)).max() <= 1
    assert PSEUDO_COUNT > 0


def test_tables_cover_pairs_within_groups_only(rng):
    histograms = [ClassHistogram(k, rng.integers(0, 9, size=(3, LEVELS))) for k in (1, 2, 3, 4)]
    groups = StainGroups({1: (1, 2), 2: (3, 4)})
    tables = StainMixService.build_transfer_tables(histograms, groups)
    assert set(tables) == {(1, 1), (1, 2), (2, 1), (2, 2), (3, 3), (3, 4), (4, 3), (4, 4)}


def test_mixup_destination_stays_in_the_stain_group(rng):
    histograms = [ClassHistogram(k, rng.integers(1, 9, size=(3, LEVELS))) for k in (1, 2, 3, 4)]
    groups = StainGroups({1: (1, 2), 2: (3, 4)})
    tables = StainMixService.build_transfer_tables(histograms, groups)
    tile = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
    destinations = set()
    for _ in range(50):
        mixed, destination = StainMixService.apply_mixup(tile, 3, tables, groups, rng)
        assert mixed.shape == tile.shape and mixed.dtype == np.uint8
        destinations.add(destination)
    assert destinations == {3, 4}


def test_mixup_destinations_are_uniform_over_the_group(rng):
    histograms = [ClassHistogram(k, rng.integers(1, 9, size=(3, LEVELS))) for k in (1, 2, 3, 4)]
    groups = StainGroups({1: (1, 2, 3, 4)})
    tables = StainMixService.build_transfer_tables(histograms, groups)
    tile = rng.integers(0, 256, size=(2, 2, 3), dtype=np.uint8)
    draws = 10_000
    counts = Counter(StainMixService.apply_mixup(tile, 2, tables, groups, rng)[1] for _ in range(draws))
    assert set(counts) == {1, 2, 3, 4}
    sigma = np.sqrt(draws * 0.25 * 0.75)
    for count in counts.values():
        assert abs(count - draws / 4) <= 3 * sigma


def test_mixup_without_table_is_a_configuration_error(rng):
    groups = StainGroups({1: (1, 2)})
    with pytest.raises(ConfigurationError):
        StainMixService.apply_mixup(np.zeros((2, 2, 3), dtype=np.uint8), 1, {}, groups, rng)


def test_brightness_scales_and_clamps():
    tile = np.full((4, 4, 3), 100, dtype=np.uint8)
    np.testing.assert_array_equal(StainMixService.adjust(tile, brightness=1.2), 120)
    bright = np.full((4, 4, 3), 250, dtype=np.uint8)
    np.testing.assert_array_equal(StainMixService.adjust(bright, brightness=1.2), 255)


def test_neutral_factors_leave_tile_unchanged(rng):
    tile = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
    np.testing.assert_array_equal(StainMixService.adjust(tile, 1.0, 1.0, 1.0, 0.0), tile)
    np.testing.assert_array_equal(StainMixService.color_jitter(tile, JitterRanges(), rng), tile)


def test_hue_shift_keeps_gray_and_rejects_large_shifts():
    gray = np.full((4, 4, 3), 90, dtype=np.uint8)
    np.testing.assert_array_equal(StainMixService.adjust(gray, hue=0.05), gray)
    with pytest.raises(ParameterError):
        StainMixService.adjust(gray, hue=0.7)


def test_jitter_draws_within_ranges(rng):
    ranges = RunConfig().svm_jitter()
    for _ in range(20):
        brightness, contrast, saturation, hue = StainMixService.sample_jitter(ranges, rng)
        assert 0.8 <= brightness <= 1.2 and 0.8 <= contrast <= 1.2
        assert 0.4 <= saturation <= 1.6 and -0.05 <= hue <= 0.05
    assert StainMixService.sample_jitter(JitterRanges(brightness=(0.9, 1.1)), rng)[1:] == (None, None, None)


def test_mixup_matches_rendered_class_histograms():
    specs = [s for s in SynthService.default_class_specs() if s.stain_group == 1]
    corpus = {s.class_id: np.stack([SynthService.render(s, 1000 * s.class_id + i).pixels for i in range(200)]) for s in specs}
    histograms = StainMixService.build_class_histograms(corpus, sample_budget=200)
    groups = StainGroups({1: tuple(corpus)})
    tables = StainMixService.build_transfer_tables(histograms, groups)
    by_class = {h.class_id: h for h in histograms}
    for (source, destination), table in tables.items():
        for c in range(3):
            distance = StainMixService.mapped_ks_distance(
                by_class[source].counts[c], by_class[destination].counts[c], table.lut[c]
            )
            assert distance <= 2 / 256


def orientation_coherence(tiles):
    """(Jxx - Jyy) / (Jxx + Jyy) of the gray structure tensor; negative for horizontal texture"""
    jxx = jyy = 0.0
    for tile in tiles:
        gy, gx = np.gradient(tile.astype(np.float64).mean(axis=2))
        jxx += np.sum(gx**2)
        jyy += np.sum(gy**2)
    return (jxx - jyy) / (jxx + jyy)


def test_mixup_keeps_texture_orientation():
    horizontal, vertical = [s for s in SynthService.default_class_specs() if s.class_id in (2, 3)]
    corpus = {
        s.class_id: np.stack([SynthService.render(s, 50 * s.class_id + i).pixels for i in range(40)])
        for s in (horizontal, vertical)
    }
    histograms = StainMixService.build_class_histograms(corpus)
    tables = StainMixService.build_transfer_tables(histograms, StainGroups({1: (2, 3)}))

    assert orientation_coherence(corpus[2]) < -0.3
    assert orientation_coherence(corpus[3]) > 0.3
    assert orientation_coherence([tables[(2, 3)].apply(t) for t in corpus[2][:10]]) < -0.3
    assert orientation_coherence([tables[(3, 2)].apply(t) for t in corpus[3][:10]]) > 0.3
