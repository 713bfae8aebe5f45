use texsynth::dataset::synthetic_suite;
use texsynth::dsp::{stft_mag, Signal, Window};
use texsynth::eval::spectral_distance;
use texsynth::reconstruct::{gla_from_predictions, stitch_sequence, GlaConfig, StitchMode};

const LEN: usize = 8_000;

fn mean_distance(out: &Signal, truth: &Signal) -> f64 {
    let n = out.len().min(truth.len());
    let crop = |s: &Signal| Signal::at_10khz(s.samples[..n].to_vec()).unwrap();
    spectral_distance(&crop(out), &crop(truth)).unwrap().mean
}

#[test]
fn gla_tracks_its_targets_better_than_random_phase_stitching() {
    let fixtures: Vec<(String, Signal)> = [11, 12]
        .into_iter()
        .flat_map(|seed| synthetic_suite(10, seed).into_iter().map(move |m| (seed, m)))
        .map(|(seed, m)| {
            let rec = m.render(LEN).unwrap();
            (format!("{} (suite {seed})", m.material_id), rec.accel_ms2)
        })
        .collect();
    assert_eq!(fixtures.len(), 20);

    let mut wins = 0;
    for (i, (name, truth)) in fixtures.iter().enumerate() {
        let cfg = GlaConfig {
            phase_seed: i as u64,
            ..GlaConfig::default()
        };
        let coarse = stft_mag(truth, cfg.hop, Window::Rectangular).unwrap();
        let gla = gla_from_predictions(&coarse, &cfg).unwrap().signal;
        let fine = stft_mag(truth, 100, Window::Rectangular).unwrap();
        let stitched = stitch_sequence(&fine, 100, StitchMode::RandomPhase, i as u64).unwrap();

        let (g, s) = (mean_distance(&gla, truth), mean_distance(&stitched, truth));
        println!("{name}: gla {g:.2} random-phase {s:.2}");
        wins += usize::from(g < s);
    }
    assert!(wins * 10 >= fixtures.len() * 9, "gla closer on only {wins}/20");
}
