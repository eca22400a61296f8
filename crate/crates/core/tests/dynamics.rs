//! Trajectory phenomenology behind the usual figures: zig-zag direction
//! transfer at the field, beam splitting, spin-vector winding, jump
//! clustering and the nonlocal onset for the entangled pair.

use zigzag_core::integrator::{run_batch, run_trajectory, IntegratorSettings, RecordOptions};
use zigzag_core::sampling::sample_initial;
use zigzag_core::scenarios::{find, EPR_SG, SPIN_Y_SINGLE};
use zigzag_core::suite::jump_clustering_check;

/// Mean absolute per-step displacement along one axis over a time window.
fn axis_activity(rec: &zigzag_core::integrator::TrajectoryRecord, axis: usize, lo: f64, hi: f64) -> f64 {
    let mut total = 0.0;
    let mut time = 0.0;
    for w in rec.samples.windows(2) {
        if w[0].t >= lo && w[1].t <= hi {
            total += (w[1].positions[0][axis] - w[0].positions[0][axis]).abs();
            time += w[1].t - w[0].t;
        }
    }
    total / time
}

#[test]
fn zigzag_direction_follows_the_spin_vector_through_the_field() {
    let spec = find(SPIN_Y_SINGLE).unwrap();
    let state = spec.build_state().unwrap();
    let init = sample_initial(&state, 1, 11).unwrap().remove(0);
    let settings = IntegratorSettings { rng_seed: 11, ..spec.settings.clone() };
    let rec = run_trajectory(&state, &init, &settings, 0).unwrap();

    // before the field: back-and-forth along y, little z motion
    let y_before = axis_activity(&rec, 1, 0.0, spec.field.t_i);
    let z_before = axis_activity(&rec, 2, 0.0, spec.field.t_i);
    assert!(
        y_before > 5.0 * z_before,
        "expected y-dominated zig-zag before the field: y {y_before}, z {z_before}"
    );
    // after the field: along z
    let y_after = axis_activity(&rec, 1, spec.field.t_f, spec.t_total);
    let z_after = axis_activity(&rec, 2, spec.field.t_f, spec.t_total);
    assert!(
        z_after > 5.0 * y_after,
        "expected z-dominated zig-zag after the field: y {y_after}, z {z_after}"
    );

    // the spin vector winds from +y to ±z along the way
    let first = &rec.samples[0];
    assert!(first.spins[0][1] > 0.99);
    let last = rec.final_row();
    assert!(last.spins[0][2].abs() > 0.99, "final spin {:?}", last.spins[0]);

    // speed along the trajectory stays within the sanity bound
    for w in rec.samples.windows(2) {
        let dt = w[1].t - w[0].t;
        let d: f64 = (0..3)
            .map(|c| (w[1].positions[0][c] - w[0].positions[0][c]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(d <= 1.2 * dt + 1e-9, "speed {} above bound", d / dt);
    }
}

#[test]
fn ten_trajectories_split_into_both_beams() {
    let spec = find(SPIN_Y_SINGLE).unwrap();
    let state = spec.build_state().unwrap();
    let inits = sample_initial(&state, 10, 23).unwrap();
    let settings = IntegratorSettings {
        rng_seed: 23,
        record: RecordOptions { stride_time: f64::INFINITY, sample_at: vec![], keep_events: true },
        ..spec.settings.clone()
    };
    let batch = run_batch(&state, &inits, &settings, 0);
    assert_eq!(batch.n_failed(), 0);
    let ups = batch.records().filter(|r| r.final_row().positions[0][2] > 0.0).count();
    assert!(
        (1..=9).contains(&ups),
        "balanced spinor should populate both beams, got {ups}/10 up"
    );
    // every record carries jump events to plot
    for rec in batch.records() {
        assert!(!rec.events.is_empty());
    }
}

#[test]
fn post_field_jumps_cluster_near_the_plane() {
    let (median, separation, ok) = jump_clustering_check(31);
    assert!(
        ok,
        "median |z| of post-field jumps ({median}) should sit below the branch separation ({separation})"
    );
}

#[test]
fn measured_pair_starts_zigzagging_together_after_t_i() {
    let spec = find(EPR_SG).unwrap();
    let state = spec.build_state().unwrap();
    let init = sample_initial(&state, 1, 19).unwrap().remove(0);
    let settings = IntegratorSettings { rng_seed: 19, ..spec.settings.clone() };
    let rec = run_trajectory(&state, &init, &settings, 0).unwrap();

    assert!(rec.events.iter().all(|e| e.time >= spec.field.t_i));
    let first_p2_flip = rec.events.iter().find(|e| e.particle == 1).map(|e| e.time);
    assert!(
        first_p2_flip.is_some(),
        "particle 2 should start zig-zagging once particle 1 enters the device"
    );
    assert!(first_p2_flip.unwrap() >= spec.field.t_i);

    // particle 2 keeps hovering near z = 0 while particle 1 resolves a beam
    let last = rec.final_row();
    assert!(last.positions[0][2].abs() > 500.0, "particle 1 should resolve a beam");
    assert!(
        last.positions[1][2].abs() < 500.0,
        "particle 2 zig-zags around the plane, got z = {}",
        last.positions[1][2]
    );

    // opposite spins row by row
    for row in &rec.samples {
        for c in 0..3 {
            assert!((row.spins[0][c] + row.spins[1][c]).abs() <= 1e-12);
        }
    }
}
