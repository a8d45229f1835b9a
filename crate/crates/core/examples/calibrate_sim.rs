//! Grid search over simulation parameters for the three-prevalence sweep.
//!
//! Usage: cargo run --release --example calibrate_sim -- [seeds] [noise,..] [gain,..] [separation,..]
//!
//! For each (noise_scale, step_gain) prints the mean validation-sensitivity
//! amplitude and collapse frequency per prevalence, plus whether the target
//! pattern holds: amplitudes strictly decreasing in prevalence, at least 60%
//! of low-prevalence seeds collapsing, no collapses at the highest prevalence,
//! and mean final F1 not above mean selected F1 at the lowest prevalence.

use std::env;

use promptforge::simlab::{run_instability_experiment, ExperimentParams, SimParams};

const PREVALENCES: [f64; 3] = [0.03, 0.12, 0.23];

fn list(arg: Option<String>, default: &[f64]) -> Vec<f64> {
    arg.map(|s| s.split(',').map(|x| x.trim().parse().expect("number")).collect())
        .unwrap_or_else(|| default.to_vec())
}

fn main() {
    let mut args = env::args().skip(1);
    let seeds: usize = args.next().map_or(50, |s| s.parse().expect("seed count"));
    let defaults = SimParams::default();
    let noises = list(args.next(), &[defaults.noise_scale]);
    let gains = list(args.next(), &[defaults.step_gain]);
    let separations = list(args.next(), &[defaults.separation]);

    println!("sep  noise  gain   amp@.03 amp@.12 amp@.23  col@.03 col@.12 col@.23  final@.03 sel@.03  ok");
    for &separation in &separations {
    for &noise_scale in &noises {
        for &step_gain in &gains {
            let params = ExperimentParams {
                sim: SimParams {
                    noise_scale,
                    step_gain,
                    separation,
                    ..defaults.clone()
                },
                ..ExperimentParams::default()
            };
            let (summary, _) = run_instability_experiment(&PREVALENCES, seeds, &params).expect("valid params");
            let r = &summary.rows;
            let ok = r[0].mean_amplitude > r[1].mean_amplitude
                && r[1].mean_amplitude > r[2].mean_amplitude
                && r[0].collapse_frequency >= 0.6
                && r[2].collapse_frequency == 0.0
                && r[0].mean_final_val_f1 <= r[0].mean_selected_val_f1;
            println!(
                "{separation:<4} {noise_scale:<6} {step_gain:<6} {:.3}   {:.3}   {:.3}    {:.2}    {:.2}    {:.2}     {:.3}     {:.3}    {}",
                r[0].mean_amplitude,
                r[1].mean_amplitude,
                r[2].mean_amplitude,
                r[0].collapse_frequency,
                r[1].collapse_frequency,
                r[2].collapse_frequency,
                r[0].mean_final_val_f1,
                r[0].mean_selected_val_f1,
                if ok { "yes" } else { "no" },
            );
        }
    }
    }
}
