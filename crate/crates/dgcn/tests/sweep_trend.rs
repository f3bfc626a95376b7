use dgcn::sweep::{best_cell, read_rows, run_sweep, SweepGrid};
use dgcn_core::dgcn::PipelineConfig;
use dgcn_core::synth::{synth_dataset, SynthConfig};

#[test]
fn best_heterophilic_cell_mixes_in_high_frequencies() {
    let grid = SweepGrid {
        ks: vec![2],
        mus: (0..=10).map(|i| i as f64 / 10.0).collect(),
        betas: vec![1.0],
        seeds: vec![0],
    };
    let base = PipelineConfig::default();
    let mut best_mus = Vec::new();
    for seed in 0..5 {
        let ds = synth_dataset(&SynthConfig {
            n: 150,
            classes: 5,
            dims: 16,
            homophily: 0.1,
            mean_degree: 10.0,
            feature_noise: 0.3,
            seed,
        })
        .unwrap()
        .dataset;
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sweep.csv");
        run_sweep(&ds, &base, &grid, &out, 1, |_| {}).unwrap();
        let (_, mu, _, _) = best_cell(&read_rows(&out).unwrap()).unwrap();
        best_mus.push(mu);
    }
    let mixed = best_mus.iter().filter(|&&mu| mu > 0.0).count();
    eprintln!("best mu per generator seed: {best_mus:?}");
    assert!(mixed >= 4, "best mu per generator seed: {best_mus:?}");
}
