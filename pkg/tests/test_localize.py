"""Grid regions, pose fitting, elimination trials, and the localization loop."""
import math

import numpy as np
import pytest
from oracles import sector_bruteforce

from bugsweep.errors import ConfigError
from bugsweep.geometry import dist, polygon_area
from bugsweep.localize import (
    AREA_FRACTION,
    DILATE_M,
    GRID_CELL_M,
    POSE_SLOP_M,
    GridRegion,
    SimulatedField,
    TrialSpec,
    apply_trial,
    audio_localize,
    generate_trial,
    localize,
    map_coverage,
    most_likely_location,
)
from bugsweep.suites import audio_loc_scenario, fig8_scenario, loc_scenario
from bugsweep.worldsim import SensorPlacement, coverage_oracle

RECT = [(0.0, 0.0), (6.0, 0.0), (6.0, 5.0), (0.0, 5.0)]


def rect_overlap_oracle(w, h, cell):
    """Independent occupancy for an axis-aligned w x h room at (0,0): a cell
    is included iff its open square overlaps the open rectangle."""
    nx, ny = math.ceil(w / cell), math.ceil(h / cell)
    mask = np.zeros((ny, nx), dtype=bool)
    for iy in range(ny):
        for ix in range(nx):
            x0, y0 = ix * cell, iy * cell
            mask[iy, ix] = (
                x0 < w - 1e-9 and x0 + cell > 1e-9 and y0 < h - 1e-9 and y0 + cell > 1e-9
            )
    return mask


def split_oracle(centers, position, heading, radius):
    """Reimplemented margin split: (confidently sensed, possibly sensed)."""
    hx, hy = math.cos(math.radians(heading)), math.sin(math.radians(heading))
    conf, poss = [], []
    for x, y in centers:
        d = math.hypot(x - position[0], y - position[1])
        fwd = (x - position[0]) * hx + (y - position[1]) * hy
        conf.append(d <= radius - POSE_SLOP_M and fwd >= POSE_SLOP_M)
        poss.append(d <= radius + POSE_SLOP_M and fwd >= -POSE_SLOP_M)
    return np.array(conf), np.array(poss)


def ang_diff(a, b):
    return abs((a - b + 180.0) % 360.0 - 180.0)


class TestGridRegion:
    def test_aligned_rectangle_matches_overlap_oracle(self):
        region = GridRegion.from_room(RECT)
        assert region.mask.shape == (20, 24)
        assert np.array_equal(region.mask, rect_overlap_oracle(6.0, 5.0, GRID_CELL_M))
        assert region.area() == pytest.approx(30.0)

    def test_misaligned_rectangle_keeps_boundary_slivers(self):
        room = [(0.0, 0.0), (7.8, 0.0), (7.8, 5.0), (0.0, 5.0)]
        region = GridRegion.from_room(room)
        assert np.array_equal(region.mask, rect_overlap_oracle(7.8, 5.0, GRID_CELL_M))
        # last-column cells overlap the room even though their centers do not
        assert region.mask[:, -1].all()
        walk = region.walkable_centers()
        assert len(walk) == region.count() - 20
        assert walk[:, 0].max() < 7.8

    def test_l_shaped_room_matches_overlap_oracle(self):
        room = [(0.0, 0.0), (8.0, 0.0), (8.0, 3.5), (4.0, 3.5), (4.0, 6.0), (0.0, 6.0)]
        region = GridRegion.from_room(room)
        nx, ny = 32, 24
        expected = np.zeros((ny, nx), dtype=bool)
        for iy in range(ny):
            for ix in range(nx):
                x0, y0 = ix * 0.25, iy * 0.25
                in_a = x0 < 8.0 - 1e-9 and y0 < 3.5 - 1e-9
                in_b = x0 < 4.0 - 1e-9 and y0 < 6.0 - 1e-9
                expected[iy, ix] = in_a or in_b
        assert region.mask.shape == expected.shape
        assert np.array_equal(region.mask, expected)
        assert region.area() == pytest.approx(polygon_area(room))

    def test_from_points_dilation(self):
        region = GridRegion.from_points(RECT, [(1.0, 1.0)], DILATE_M)
        base = GridRegion.from_room(RECT)
        inside = [
            (x, y) for x, y in base.centers() if math.hypot(x - 1.0, y - 1.0) <= DILATE_M
        ]
        assert region.count() == len(inside)
        for x, y in region.centers():
            assert math.hypot(x - 1.0, y - 1.0) <= DILATE_M + 1e-9

    def test_from_points_empty(self):
        region = GridRegion.from_points(RECT, [], DILATE_M)
        assert region.count() == 0
        with pytest.raises(ValueError):
            region.centroid()

    def test_contains_on_cell_edge(self):
        base = GridRegion.from_room(RECT)
        mask = np.zeros_like(base.mask)
        mask[1, 1] = True  # cell [0.25,0.5) x [0.25,0.5)
        region = base.with_mask(mask)
        assert region.contains((0.3, 0.3))
        assert region.contains((0.5, 0.5))  # corner shared with the cell
        assert region.contains((0.25, 0.375))  # left edge
        assert not region.contains((0.51, 0.51))
        assert not region.contains((5.0, 4.0))

    def test_boundary_cells_of_a_block(self):
        base = GridRegion.from_room(RECT)
        mask = np.zeros_like(base.mask)
        mask[4:7, 4:7] = True
        region = base.with_mask(mask)
        assert region.count() == 9
        boundary = region.boundary_cells()
        assert len(boundary) == 8  # the 3x3 block minus its middle cell
        center = (region.origin[0] + 5.5 * 0.25, region.origin[1] + 5.5 * 0.25)
        assert all(dist((x, y), center) > 1e-9 for x, y in boundary)

    def test_area_tracks_count(self):
        region = GridRegion.from_room(RECT, cell=0.5)
        assert region.cell == 0.5
        assert region.area() == pytest.approx(region.count() * 0.25)

    def test_cached_base_grid_is_copied(self):
        a = GridRegion.from_room(RECT)
        a.mask[:] = False
        b = GridRegion.from_room(RECT)
        assert b.mask.any()

    def test_bad_cell_size(self):
        with pytest.raises(ConfigError):
            GridRegion.from_room(RECT, cell=0.0)


class TestMostLikelyLocation:
    def test_wedge_fit_recovers_apex_and_heading(self):
        apex, heading = (0.6, 2.5), 0.0
        base = GridRegion.from_room(RECT)
        sel = np.array(
            [sector_bruteforce(apex, heading, 90.0, 2.5, (x, y)) for x, y in base._all_centers()]
        )
        region = base.with_mask(base.mask & sel.reshape(base.mask.shape))
        x, y, h = most_likely_location(region)
        assert dist((x, y), apex) <= 0.75
        assert ang_diff(h, heading) <= 15.0

    def test_disk_fit_recovers_center(self):
        center = (3.0, 2.5)
        base = GridRegion.from_room(RECT)
        sel = np.array(
            [dist((x, y), center) <= 1.5 for x, y in base._all_centers()]
        )
        region = base.with_mask(base.mask & sel.reshape(base.mask.shape))
        x, y, _ = most_likely_location(region)
        assert abs(x - center[0]) <= 0.26 and abs(y - center[1]) <= 0.26

    def test_empty_region_rejected(self):
        base = GridRegion.from_room(RECT)
        with pytest.raises(ValueError):
            most_likely_location(base.with_mask(np.zeros_like(base.mask)))


class TestTrials:
    def test_two_cell_split_is_one_and_one(self):
        pts = [(2.125, 2.625), (4.125, 2.625)]
        region = GridRegion.from_points(RECT, pts, 0.05)
        assert region.count() == 2
        mle = most_likely_location(region)
        spec = generate_trial(mle, region, radius_m=3.0)
        assert spec is not None
        conf, poss = split_oracle(region.centers(), spec.position, spec.heading_deg, 3.0)
        assert conf.sum() == 1 and (~poss).sum() == 1
        # the stand point sits between the two cells, not off to a side
        assert max(dist(spec.position, p) for p in pts) <= 2.5

    def test_single_cell_terminates(self):
        region = GridRegion.from_points(RECT, [(3.125, 2.625)], 0.05)
        assert region.count() == 1
        assert generate_trial((3.125, 2.625, 0.0), region, 3.0) is None

    def test_partition_nonempty_over_random_regions(self):
        rng = np.random.default_rng(42)
        generated = 0
        for _ in range(100):
            k = int(rng.integers(1, 5))
            pts = [(float(rng.uniform(0.5, 5.5)), float(rng.uniform(0.5, 4.5))) for _ in range(k)]
            region = GridRegion.from_points(RECT, pts, float(rng.uniform(0.4, 1.2)))
            if region.count() < 2:
                continue
            mle = most_likely_location(region)
            spec = generate_trial(mle, region, radius_m=3.0)
            if spec is None:
                continue
            generated += 1
            conf, poss = split_oracle(
                region.centers(), spec.position, spec.heading_deg, 3.0
            )
            assert conf.sum() >= 1, "trial with nothing confidently sensed"
            assert (~poss).sum() >= 1, "trial with nothing provably shadowed"
        assert generated >= 70, f"only {generated}/100 regions produced a trial"

    def test_apply_trial_margin_semantics(self):
        base = GridRegion.from_room(RECT)
        mask = np.zeros_like(base.mask)
        mask[10, :] = True  # one full row of cells at y = 2.625
        region = base.with_mask(mask)
        spec = TrialSpec((3.0, 2.625), 0.0, "hand-wave")
        conf, poss = split_oracle(base._all_centers(), spec.position, 0.0, 2.0)
        kept = apply_trial(region, spec, 2.0, outcome=True)
        assert np.array_equal(
            kept.mask, region.mask & poss.reshape(region.mask.shape)
        )
        removed = apply_trial(region, spec, 2.0, outcome=False)
        assert np.array_equal(
            removed.mask, region.mask & ~conf.reshape(region.mask.shape)
        )
        # margins: a positive keeps slightly-behind cells, a negative spares them
        behind = (2.875, 2.625)  # 0.125 m behind the stand point
        assert kept.contains(behind) and removed.contains(behind)


class TestMapCoverage:
    def test_six_probe_walkthrough_matches_oracle(self):
        sc, sensor = fig8_scenario()
        probes = [(1.0, 1.0), (1.0, 5.0), (3.0, 3.0), (6.0, 1.0), (6.0, 3.0), (7.0, 1.75)]
        state = map_coverage(sc, sensor.mac, traversal=probes)
        expected = [p for p in probes if coverage_oracle(sensor, p)]
        assert state.positives == expected
        assert expected == [(6.0, 1.0), (6.0, 3.0), (7.0, 1.75)]
        assert state.status == "ok" and state.probes_run == 6
        # the candidate region is exactly the dilation of the positive stands
        dilated = GridRegion.from_points(sc.room, expected, DILATE_M)
        assert np.array_equal(state.included.mask, dilated.mask)

    def test_full_coverage_sensor_marks_every_probe(self):
        sc, _ = loc_scenario(0)
        sc.sensors = [
            SensorPlacement(
                "camera",
                "02:4c:7e:50:00:01",
                (sc.user_start[0], sc.user_start[1]),
                params={"fov_deg": 360.0, "range_m": 20.0},
            )
        ]
        probes = [(1.0, 1.0), (1.0, 3.5), (2.5, 2.0), (4.0, 1.0), (4.0, 3.5), (3.0, 3.0)]
        state = map_coverage(sc, "02:4c:7e:50:00:01", traversal=probes)
        assert state.positives == probes
        dilated = GridRegion.from_points(sc.room, probes, DILATE_M)
        assert np.array_equal(state.included.mask, dilated.mask)

    def test_no_positive_probes_not_localizable(self):
        sc, sensor = fig8_scenario()
        probes = [(1.0, 1.0), (1.0, 5.0), (2.0, 3.0), (3.0, 1.0)]  # all out of view
        state = map_coverage(sc, sensor.mac, traversal=probes)
        assert state.status == "not-localizable"
        assert state.included.count() == 0 and state.mle is None


class TestLocalize:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_soundness_and_replayable_shrinkage(self, seed):
        sc, sensor = loc_scenario(seed)
        result = localize(sc, sensor.mac)
        assert result.status == "ok"
        assert result.region.contains(tuple(sensor.position))
        assert len(result.trials) <= max(result.initial.count() - 1, 0)
        # replaying the recorded trials reproduces the final region exactly,
        # shrinking strictly at every step
        field = SimulatedField(sc, sensor.mac)
        radius = field.trial_radius()
        region = result.initial
        for t in result.trials:
            nxt = apply_trial(
                region, TrialSpec(t.position, t.heading_deg, t.stimulus), radius, t.outcome
            )
            assert nxt.count() < region.count()
            region = nxt
        assert np.array_equal(region.mask, result.region.mask)

    def test_threshold_one_runs_zero_trials(self):
        sc, sensor = loc_scenario(0)
        result = localize(sc, sensor.mac, threshold=1.0)
        assert result.trials == []
        assert np.array_equal(result.region.mask, result.initial.mask)

    def test_cell_size_threads_through(self):
        sc, sensor = loc_scenario(0)
        result = localize(sc, sensor.mac, cell_m=0.5)
        assert result.initial.cell == 0.5 and result.region.cell == 0.5
        assert result.region.contains(tuple(sensor.position))

    def test_audio_device_refused(self):
        sc, sensor = audio_loc_scenario(0)
        with pytest.raises(ConfigError):
            localize(sc, sensor.mac)

    def test_render_shape(self):
        sc, sensor = loc_scenario(0)
        result = localize(sc, sensor.mac)
        text = result.render()
        lines = text.strip().split("\n")
        assert lines[0] == f"mac,{sensor.mac}"
        assert lines[1] == "status,ok"
        assert sum(1 for l in lines if l.startswith("cell,")) == result.region.count()
        assert sum(1 for l in lines if l.startswith("trial,")) == len(result.trials)


class TestAudioLocalize:
    def test_volume_descent_ends_at_quietest_disk(self):
        sc, sensor = audio_loc_scenario(0)
        result = audio_localize(sc, sensor.mac)
        assert result.status == "ok"
        pos = tuple(sensor.position)
        expected = GridRegion.from_points(sc.room, [pos], 0.9)  # whisper radius
        assert np.array_equal(result.region.mask, expected.mask)
        assert result.region.contains(pos)
        assert result.region.area() <= AREA_FRACTION * polygon_area(sc.room)

    def test_response_everywhere_leaves_region_whole(self):
        # a room small enough that even a whisper reaches every cell
        sc, sensor = audio_loc_scenario(0)
        sc.room = [(0.0, 0.0), (1.2, 0.0), (1.2, 1.2), (0.0, 1.2)]
        sc.user_start = (0.6, 0.6)
        sc.sensors = [SensorPlacement("audio", sensor.mac, (0.6, 0.6))]
        result = audio_localize(sc, sensor.mac)
        assert result.status == "ok"
        assert result.region.count() == GridRegion.from_room(sc.room).count()

    def test_mute_device_not_localizable(self):
        # wake acknowledgment too small to stand out from keepalive chatter
        sc, sensor = audio_loc_scenario(0)
        sc.sensors = [
            SensorPlacement(
                "audio",
                sensor.mac,
                tuple(sensor.position),
                params={"wake_packets": 1, "wake_bytes": 80},
            )
        ]
        result = audio_localize(sc, sensor.mac)
        assert result.status == "not-localizable"
        assert result.region.count() == 0

    def test_non_audio_device_refused(self):
        sc, sensor = loc_scenario(0)
        with pytest.raises(ConfigError):
            audio_localize(sc, sensor.mac)
