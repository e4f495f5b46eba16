use std::f64::consts::PI;

use gcoerce::field::VelocityField;
use gcoerce::frontier::snapshot::{read_indicator, read_values, write_indicator, write_values};
use gcoerce::frontier::*;

fn src(x0: &[f64]) -> Source {
    Source { t0: 0.0, x0: x0.to_vec() }
}

fn ball_state(h: f64, speed: f64, t: f64, x0: &[f64]) -> LevelSetState {
    let delta = DEFAULT_DELTA_CELLS * h;
    let grid = GridSpec::for_horizon(x0.len(), h, speed, t, delta, x0).unwrap();
    LevelSetState::point_source(grid, src(x0), delta, SchemeParams::default()).unwrap()
}

fn radial_range(points: &[Vec<f64>], c: &[f64]) -> (f64, f64) {
    points
        .iter()
        .map(|p| p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold((f64::INFINITY, 0.0), |(lo, hi), r| (lo.min(r), hi.max(r)))
}

#[test]
fn bump_is_one_at_source_and_zero_outside() {
    let h = 0.05;
    let grid = GridSpec::centered(2, 40, h, &[0.3, 0.4]).unwrap();
    let st = init_point_source(&grid, &[0.3, 0.4], 3.0 * h, 0.0).unwrap();
    assert_eq!(st.value(&[20, 20]), 1.0);
    assert_eq!(st.value(&[20, 24]), 0.0);
    assert_eq!(st.value(&[0, 0]), 0.0);
    let row: Vec<f64> = (20..26).map(|j| st.value(&[20, j])).collect();
    assert!(row.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(st.time(), 0.0);
}

#[test]
fn narrow_bump_is_rejected() {
    let grid = GridSpec::centered(2, 40, 0.05, &[0.0, 0.0]).unwrap();
    assert!(matches!(
        init_point_source(&grid, &[0.0, 0.0], 0.09, 0.0),
        Err(FrontierError::BumpTooNarrow { .. })
    ));
}

#[test]
fn oversized_step_is_an_error() {
    let st = ball_state(1.0 / 32.0, 2.0, 0.5, &[0.0, 0.0]);
    let f = VelocityField::cellular(1.0, 1.0).unwrap();
    let too_big = 1.01 * st.max_dt(&f);
    assert!(matches!(step(&st, &f, too_big), Err(FrontierError::CflViolation { .. })));
    assert!(step(&st, &f, st.max_dt(&f)).is_ok());
    let bad = SchemeParams::with_cfl(0.8);
    assert!(matches!(bad.validate(2), Err(FrontierError::CflSafety { .. })));
}

#[test]
fn zero_field_grows_an_exact_ball() {
    let (h, t) = (1.0 / 64.0, 0.5);
    let x0 = [0.1, 0.15];
    let st = ball_state(h, 1.0, t, &x0);
    let f = VelocityField::zero(2).unwrap();
    let out = evolve(&st, &f, t, &[]).unwrap();
    let radius = t + st.delta() / 2.0;
    let (lo, hi) = radial_range(&level_crossings(&out[0], 0.5), &x0);
    assert!(lo > radius - 2.0 * h && hi < radius + 2.0 * h, "{lo} {hi} vs {radius}");
    let rs = reachable_indicator(&out[0], 0.5).unwrap();
    assert!((volume(&rs, None) / (PI * radius * radius) - 1.0).abs() < 0.05);
    assert!((inscribed_ball_radius(&rs, &x0) - radius).abs() < 2.0 * h);
}

#[test]
fn constant_drift_translates_the_ball() {
    let (h, t) = (1.0 / 64.0, 0.5);
    let x0 = [0.1, 0.15];
    let v = [0.3, -0.2];
    let f = VelocityField::constant(&v).unwrap();
    let st = ball_state(h, 1.0 + f.amplitude_bound(), t, &x0);
    let out = evolve(&st, &f, t, &[]).unwrap();
    let center = [x0[0] + v[0] * t, x0[1] + v[1] * t];
    let radius = t + st.delta() / 2.0;
    let (lo, hi) = radial_range(&level_crossings(&out[0], 0.5), &center);
    assert!(lo > radius - 2.0 * h && hi < radius + 2.0 * h, "{lo} {hi} vs {radius}");
}

#[test]
fn three_dimensional_ball() {
    let (h, t) = (1.0 / 24.0, 0.4);
    let x0 = [0.05, 0.1, -0.1];
    let st = ball_state(h, 1.0, t, &x0);
    let out = evolve(&st, &VelocityField::zero(3).unwrap(), t, &[]).unwrap();
    let radius = t + st.delta() / 2.0;
    let (lo, hi) = radial_range(&level_crossings(&out[0], 0.5), &x0);
    assert!(lo > radius - 2.0 * h && hi < radius + 2.0 * h, "{lo} {hi} vs {radius}");
}

#[test]
fn evolve_to_current_time_is_identity() {
    let st = ball_state(1.0 / 32.0, 3.0, 1.0, &[0.0, 0.0]);
    let f = VelocityField::cellular(2.0, 1.0).unwrap();
    let out = evolve(&st, &f, 0.0, &[]).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].to_dense(), st.to_dense());
    assert_eq!(out[0].time(), st.time());
}

#[test]
fn snapshots_hit_requested_times_and_are_deterministic() {
    let st = ball_state(1.0 / 32.0, 3.0, 1.0, &[0.0, 0.0]);
    let f = VelocityField::cellular(2.0, 1.0).unwrap();
    let times = [0.1, 0.37, 0.5];
    let a = evolve(&st, &f, 1.0, &times).unwrap();
    let b = evolve(&st, &f, 1.0, &times).unwrap();
    assert_eq!(a.len(), 4);
    for (s, t) in a.iter().zip([0.1, 0.37, 0.5, 1.0]) {
        assert_eq!(s.time(), t);
    }
    for (x, y) in a.iter().zip(&b) {
        let (xv, yv) = (x.to_dense(), y.to_dense());
        assert!(xv.iter().zip(&yv).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    assert!(matches!(
        evolve(&st, &f, 1.0, &[0.5, 0.2]),
        Err(FrontierError::UnsortedSnapshots)
    ));
    assert!(matches!(
        evolve(&st, &f, 1.0, &[1.5]),
        Err(FrontierError::SnapshotOutOfRange { .. })
    ));
    assert!(matches!(evolve(&st, &f, 5.0, &[]), Err(FrontierError::GridTooSmall { .. })));
}

#[test]
fn higher_threshold_gives_a_subset() {
    let st = ball_state(1.0 / 32.0, 3.0, 0.6, &[0.0, 0.0]);
    let f = VelocityField::cellular(2.0, 1.0).unwrap();
    let out = evolve(&st, &f, 0.6, &[]).unwrap();
    let lo = reachable_indicator(&out[0], 0.3).unwrap().to_dense();
    let hi = reachable_indicator(&out[0], 0.7).unwrap().to_dense();
    assert!(lo.iter().zip(&hi).all(|(a, b)| *a || !*b));
    assert!(reachable_indicator(&out[0], 1.0).is_err());
}

fn disk(grid: &GridSpec, c: &[f64], rho: f64) -> ReachableSet {
    let n = grid.n;
    let cells: Vec<bool> = (0..n * n)
        .map(|i| {
            let (x, y) = (grid.center(0, (i / n) as i64), grid.center(1, (i % n) as i64));
            (x - c[0]).hypot(y - c[1]) < rho
        })
        .collect();
    ReachableSet::from_dense(grid.clone(), &cells, 0.0, src(c), 0.5).unwrap()
}

#[test]
fn volume_and_perimeter_of_simple_sets() {
    let h = 0.01;
    let grid = GridSpec::centered(2, 200, h, &[0.0, 0.0]).unwrap();
    let empty = ReachableSet::from_dense(grid.clone(), &vec![false; 200 * 200], 0.0, src(&[0.0, 0.0]), 0.5).unwrap();
    assert_eq!(volume(&empty, None), 0.0);
    assert_eq!(perimeter_estimate(&empty, None).facets, 0);

    let full = ReachableSet::from_dense(grid.clone(), &vec![true; 200 * 200], 0.0, src(&[0.0, 0.0]), 0.5).unwrap();
    let w = SpatialBox::new(&[0.105, -0.195], 0.5);
    assert!((volume(&full, Some(&w)) - 0.25).abs() < 1e-9);
    assert!((inscribed_ball_radius(&full, &[0.0, 0.0]) - (grid.side() - h) / 2.0).abs() < 1e-9);

    let mut one = vec![false; 200 * 200];
    one[100 * 200 + 100] = true;
    let one = ReachableSet::from_dense(grid.clone(), &one, 0.0, src(&[0.0, 0.0]), 0.5).unwrap();
    assert!((perimeter_estimate(&one, None).manhattan - 4.0 * h).abs() < 1e-12);

    // half plane x < 0 seen through a window of side 0.5: one cross-section
    let half: Vec<bool> = (0..200 * 200).map(|i| grid.center(0, (i / 200) as i64) < 0.0).collect();
    let half = ReachableSet::from_dense(grid.clone(), &half, 0.0, src(&[0.0, 0.0]), 0.5).unwrap();
    let p = perimeter_estimate(&half, Some(&SpatialBox::new(&[0.005, 0.005], 0.5)));
    assert!((p.manhattan - 0.5).abs() < 1e-9, "{}", p.manhattan);

    let rho = 0.6;
    let d = disk(&grid, &[0.0031, -0.0017], rho);
    let p = perimeter_estimate(&d, None);
    assert!((p.manhattan - 8.0 * rho).abs() < 4.0 * h, "{}", p.manhattan);
    assert!((p.corrected / (2.0 * PI * rho) - 1.0).abs() < 0.1);
}

#[test]
fn inscribed_radius_sees_holes() {
    let h = 0.01;
    let grid = GridSpec::centered(2, 200, h, &[0.0, 0.0]).unwrap();
    let mut cells = vec![true; 200 * 200];
    // hole at (0.3, 0)
    let hole = (grid.cell_of(0, 0.3) as usize) * 200 + grid.cell_of(1, 0.0) as usize;
    cells[hole] = false;
    let rs = ReachableSet::from_dense(grid.clone(), &cells, 0.0, src(&[0.0, 0.0]), 0.5).unwrap();
    assert!(inscribed_ball_radius(&rs, &[0.0, 0.0]) < 0.3 + h);
    assert!(inscribed_ball_radius(&rs, &[0.0, 0.0]) > 0.3 - 2.0 * h);
    let mut cells = cells;
    let c = grid.cell_of(0, 0.0) as usize * 200 + grid.cell_of(1, 0.0) as usize;
    cells[c] = false;
    let rs = ReachableSet::from_dense(grid, &cells, 0.0, src(&[0.0, 0.0]), 0.5).unwrap();
    assert_eq!(inscribed_ball_radius(&rs, &[0.0, 0.0]), 0.0);
}

#[test]
fn coarsen_and_resample_preserve_a_disk() {
    let c = [0.02, -0.01];
    let fine = GridSpec::centered(2, 300, 0.01, &c).unwrap();
    let coarse = GridSpec::centered(2, 100, 0.03, &c).unwrap();
    let d = disk(&fine, &c, 0.8);
    let cd = d.coarsen(&coarse).unwrap();
    let direct = disk(&coarse, &c, 0.8);
    let (diff, union) = symmetric_difference(&cd, &direct).unwrap();
    assert!(diff / union < 0.02);
    let big = GridSpec::centered(2, 320, 0.01, &c).unwrap();
    let r = d.resample(&big).unwrap();
    assert_eq!(r.count(), d.count());
    assert!(d.coarsen(&GridSpec::centered(2, 100, 0.025, &c).unwrap()).is_err());
}

#[test]
fn oracle_reproduces_exact_balls() {
    let t = 0.3;
    let x0 = [0.1, 0.15];
    let h = 0.8 / 64.0;
    let grid = GridSpec::centered(2, 64, h, &x0).unwrap();
    for v in [[0.0, 0.0], [0.2, 0.1]] {
        let f = VelocityField::constant(&v).unwrap();
        let rs = trajectory_oracle(&f, &src(&x0), t, 32, 20, &grid).unwrap();
        let c = [x0[0] + v[0] * t, x0[1] + v[1] * t];
        assert!(max_extent(&rs, &c) < t + 2.0 * h);
        assert!(inscribed_ball_radius(&rs, &c) > t - 2.0 * h);
    }
    let big = GridSpec::centered(2, 129, h, &x0).unwrap();
    assert!(matches!(
        trajectory_oracle(&VelocityField::zero(2).unwrap(), &src(&x0), t, 8, 4, &big),
        Err(FrontierError::OracleCap { .. })
    ));
}

#[test]
fn waiting_time_is_immediate_without_flow() {
    let spec = WaitingTimeSpec {
        c: 0.5,
        horizon: 1.0,
        n_samples: 20,
        front: FrontSettings::with_h(1.0 / 32.0),
    };
    let rec = waiting_time(&VelocityField::zero(2).unwrap(), &src(&[0.0, 0.0]), &spec).unwrap();
    assert!(!rec.censored);
    assert!(rec.waiting_time.unwrap() <= 0.1);
    let f = VelocityField::constant(&[0.3, 0.0]).unwrap();
    let rec = waiting_time(&f, &src(&[0.0, 0.0]), &spec).unwrap();
    assert!(!rec.censored);
    assert!(rec.waiting_time.unwrap() <= 0.2);
    assert_eq!(rec.times.len(), 21);
    let bad = WaitingTimeSpec { c: 1.0, ..spec };
    assert!(waiting_time(&f, &src(&[0.0, 0.0]), &bad).is_err());
}

#[test]
fn fast_drift_censors_the_waiting_time() {
    let spec = WaitingTimeSpec {
        c: 0.5,
        horizon: 1.0,
        n_samples: 10,
        front: FrontSettings::with_h(1.0 / 32.0),
    };
    let f = VelocityField::constant(&[2.0, 0.0]).unwrap();
    let rec = waiting_time(&f, &src(&[0.0, 0.0]), &spec).unwrap();
    assert!(rec.censored);
    assert!(rec.waiting_time.is_none());
}

#[test]
fn trace_diagnostics_on_the_zero_field() {
    let settings = FrontSettings::with_h(1.0 / 32.0);
    let f = VelocityField::zero(2).unwrap();
    let tr = trace_reachable(&f, &src(&[0.0, 0.0]), 1.0, 10, &settings, &[0.5, 1.0]).unwrap();
    assert!(tr.volume_growth_violations(0.9, 20.0 * settings.h).is_empty());
    assert!(tr.containment_violations().is_empty());
    assert!(tr.nesting_defect.iter().all(|d| *d == 0));
    assert!(tr.source_cell_set.iter().all(|s| *s));
    assert!(tr.perimeter_violations(2.0, 20.0 * tr.h).is_empty());
    assert!(tr.box_volumes[0].windows(2).all(|w| w[1] >= w[0]));
    assert!((tr.box_volumes[0][10] - 0.25).abs() < 1e-9);
}

#[test]
fn snapshot_round_trip() {
    let st = ball_state(1.0 / 16.0, 1.0, 0.5, &[0.0, 0.0]);
    let mut buf = Vec::new();
    write_values(&mut buf, &st).unwrap();
    let header_end = buf.iter().position(|b| *b == b'\n').unwrap();
    let header = std::str::from_utf8(&buf[..header_end]).unwrap();
    assert!(header.starts_with("GCOERCE1 d=2 n="));
    let (h, values) = read_values(&buf[..]).unwrap();
    assert_eq!(h.n, st.grid().n);
    assert_eq!(values, st.to_dense());

    let rs = reachable_indicator(&st, 0.5).unwrap();
    let mut buf = Vec::new();
    write_indicator(&mut buf, &rs).unwrap();
    let (_, cells) = read_indicator(&buf[..]).unwrap();
    assert_eq!(cells, rs.to_dense());
    assert!(read_values(&b"GCOERCE2 d=2 n=4 h=1 t=0\n"[..]).is_err());
}
