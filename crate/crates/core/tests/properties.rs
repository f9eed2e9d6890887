mod common;

use approx::assert_relative_eq;
use cnmf_core::{
    cnmf::{fit_cnmf, kl_divergence, solve_activations},
    eval::{default_grid, score, sweep_thresholds, SongActivations},
    synth::{random_matrix, random_templates, random_tensor, rng},
    transcriber::{local_means, onsets_above},
    ActivationMatrix, NoteEvent, SolverConfig, SweepMode, TemplateTensor,
};
use ndarray::{Array2, Axis};
use proptest::prelude::*;

#[derive(Clone, Copy, Debug)]
struct Shape {
    n: usize,
    tau: usize,
    r: usize,
    m: usize,
}

fn shapes() -> impl Strategy<Value = Shape> {
    (2usize..9, 1usize..5, 1usize..4, 4usize..16).prop_map(|(n, tau, r, m)| Shape { n, tau, r, m })
}

fn problem(s: Shape, seed: u64) -> (Array2<f64>, TemplateTensor, ActivationMatrix) {
    let mut g = rng(seed);
    let v = random_matrix(s.n, s.m, 0.0, 2.0, &mut g);
    let w = TemplateTensor::new(random_tensor(s.n, s.tau, s.r, 0.05, 1.0, &mut g)).unwrap();
    let h = ActivationMatrix::new(random_matrix(s.r, s.m, 0.05, 1.0, &mut g)).unwrap();
    (v, w, h)
}

fn events(raw: &[(u8, u16)]) -> Vec<NoteEvent> {
    raw.iter()
        .map(|&(p, ms)| NoteEvent::new(60 + p, ms as f64 / 1000.0, 0.1))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_updates_never_raise_the_cost(s in shapes(), seed in any::<u64>()) {
        let (v, w, h) = problem(s, seed);
        let (w, h, trace) = fit_cnmf(v.view(), w, h, &SolverConfig::training().with_iters(40)).unwrap();
        prop_assert_eq!(trace.first_increase(1e-9), None, "{:?}", trace.cost_per_iteration);
        prop_assert!(w.values().iter().chain(h.values().iter()).all(|&x| x >= 0.0 && x.is_finite()));
        for sum in w.note_sums() {
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn activation_updates_never_raise_the_cost(s in shapes(), seed in any::<u64>()) {
        let (v, w, h) = problem(s, seed);
        let before = kl_divergence(v.view(), common::brute_apply(w.values(), h.values()).view()).unwrap();
        let (h, trace) = solve_activations(v.view(), &w, h, &SolverConfig::transcription().with_iters(40)).unwrap();
        prop_assert!(trace.cost_per_iteration[0] <= before * (1.0 + 1e-9));
        prop_assert_eq!(trace.first_increase(1e-9), None);
        prop_assert!(h.values().iter().all(|&x| x >= 0.0));
        // The reported cost is the cost of the returned factors.
        let after = common::kl(&v, &common::brute_apply(w.values(), h.values()));
        assert_relative_eq!(trace.final_cost().unwrap(), after, max_relative = 1e-9);
    }

    #[test]
    fn scaling_the_data_scales_the_activations(s in shapes(), seed in any::<u64>(), c in 0.01f64..100.0) {
        let (v, w, h) = problem(s, seed);
        let cfg = SolverConfig::transcription().with_iters(25);
        let (h1, t1) = solve_activations(v.view(), &w, h.clone(), &cfg).unwrap();
        let scaled_h = ActivationMatrix::new(h.values() * c).unwrap();
        let (h2, t2) = solve_activations((&v * c).view(), &w, scaled_h, &cfg).unwrap();
        for (a, b) in h1.values().iter().zip(h2.values()) {
            assert_relative_eq!(a * c, *b, max_relative = 1e-6, epsilon = 1e-9);
        }
        assert_relative_eq!(t1.final_cost().unwrap() * c, t2.final_cost().unwrap(), max_relative = 1e-6);
    }

    #[test]
    fn onsets_shrink_as_the_threshold_rises(row in prop::collection::vec(0.0f64..1.0, 1..80), d1 in 0.0f64..0.5, d2 in 0.0f64..0.5) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let means = local_means(&row, 10);
        let loose = onsets_above(&row, &means, lo);
        let strict = onsets_above(&row, &means, hi);
        prop_assert!(strict.iter().all(|t| loose.contains(t)));
        prop_assert_eq!(&loose, &common::brute_onsets(&row, lo, 10));
    }

    #[test]
    fn leading_silence_shifts_onsets(row in prop::collection::vec(0.0f64..1.0, 1..80), k in 0usize..30, delta in 0.0f64..0.4) {
        let onsets = onsets_above(&row, &local_means(&row, 10), delta);
        let mut padded = vec![0.0; k];
        padded.extend_from_slice(&row);
        let shifted = onsets_above(&padded, &local_means(&padded, 10), delta);
        let expected: Vec<usize> = onsets.iter().map(|t| t + k).collect();
        prop_assert_eq!(shifted, expected);
    }

    #[test]
    fn matching_is_symmetric_and_bounded(
        a in prop::collection::vec((0u8..3, 0u16..2000), 0..12),
        b in prop::collection::vec((0u8..3, 0u16..2000), 0..12),
    ) {
        let (a, b) = (events(&a), events(&b));
        let ab = score(&a, &b, 0.05);
        let ba = score(&b, &a, 0.05);
        prop_assert_eq!((ab.tp, ab.fp, ab.fn_), (ba.tp, ba.fn_, ba.fp));
        prop_assert_eq!(ab.f_measure, ba.f_measure);
        prop_assert_eq!(ab.accuracy, ba.accuracy);
        prop_assert!(0.0 <= ab.accuracy && ab.accuracy <= ab.f_measure && ab.f_measure <= 1.0);
        prop_assert!(ab.f_measure <= ab.precision.max(ab.recall) + 1e-12);

        let feasible: Vec<Vec<bool>> = a
            .iter()
            .map(|x| b.iter().map(|y| x.pitch == y.pitch && (x.onset - y.onset).abs() <= 0.05 + 1e-9).collect())
            .collect();
        prop_assert_eq!(ab.tp, common::brute_max_matching(&feasible));
    }
}

#[test]
fn per_song_thresholds_dominate_a_shared_one() {
    let mut g = rng(11);
    let hop = 0.02;
    let songs: Vec<SongActivations> = (0..6)
        .map(|s| {
            let mut h = random_matrix(3, 200, 0.0, 0.15 * (s + 1) as f64, &mut g);
            let mut reference = Vec::new();
            for q in 0..3 {
                for k in 0..5 {
                    let t = 20 + 35 * k + q * 3;
                    h[[q, t]] += 0.1 + 0.08 * s as f64;
                    reference.push(NoteEvent::new(60 + q as u8, t as f64 * hop, 0.5));
                }
            }
            SongActivations {
                name: format!("song{s}"),
                activations: ActivationMatrix::new(h).unwrap(),
                hop_seconds: hop,
                midi_base: 60,
                reference,
            }
        })
        .collect();
    let grid = default_grid();
    let global = sweep_thresholds(&songs, &grid, 0.05, None, SweepMode::Global).unwrap();
    let per_song = sweep_thresholds(&songs, &grid, 0.05, None, SweepMode::PerSong).unwrap();
    assert!(per_song.mean_f() >= global.mean_f());
    for (own, shared) in per_song.selected().iter().zip(global.selected()) {
        assert!(own.f_measure >= shared.f_measure);
    }
    // The songs need different thresholds, so a shared one loses something.
    assert!(per_song.mean_f() > global.mean_f());
    let chosen = per_song.best_per_song_deltas();
    assert!(chosen.iter().any(|&d| d != chosen[0]));
}

#[test]
fn planted_library_separates_notes() {
    // Columns of random sparse templates barely overlap, so each note's
    // energy stays on its own row.
    let w = random_templates(40, 3, 4, &mut rng(5));
    let mut h = Array2::zeros((4, 60));
    for q in 0..4 {
        h[[q, 5 + 12 * q]] = 1.0;
    }
    let v = common::brute_apply(w.values(), &h);
    let h0 = ActivationMatrix::new(Array2::from_elem((4, 60), 0.1)).unwrap();
    let (got, _) = solve_activations(v.view(), &w, h0, &SolverConfig::transcription().with_iters(300)).unwrap();
    for (q, row) in got.values().axis_iter(Axis(0)).enumerate() {
        let best = row
            .iter()
            .enumerate()
            .fold((0, 0.0), |b, (t, &x)| if x > b.1 { (t, x) } else { b });
        assert_eq!(best.0, 5 + 12 * q);
    }
}
