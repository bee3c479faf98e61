//! Full toy-experiment probe: runs every stage and prints the quality
//! measurements the acceptance suite checks.

use synthasr_pipeline::config::ExperimentConfig;
use synthasr_pipeline::experiment::run_experiment;

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx.sqrt() * vy.sqrt()).max(1e-12)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().collect();
    let cfg = ExperimentConfig::load(&args[1]).unwrap();
    let out_dir = &args[2];

    let t0 = std::time::Instant::now();
    let out = run_experiment(&cfg, out_dir).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();

    let tts_first = out.tts_log.initial_loss;
    let tts_last = *out.tts_log.epoch_losses.last().unwrap();
    println!("== calibration summary ==");
    println!("wall time: {:.1} min", elapsed / 60.0);
    println!("tts: initial {tts_first:.4} final {tts_last:.4} ratio {:.3}", tts_last / tts_first);
    println!(
        "mel2lin: initial {:.4} final {:.4}",
        out.mel2lin_log.initial_loss,
        out.mel2lin_log.epoch_losses.last().unwrap()
    );
    println!(
        "asr phase1: initial {:.4} final {:.4}",
        out.phase1.initial_loss,
        out.phase1.checkpoint_losses.last().unwrap()
    );
    for (i, p) in out.phase2.iter().enumerate() {
        let last = p.checkpoint_losses.last().unwrap();
        println!(
            "asr phase2[{i}]: initial {:.4} final {last:.4} ratio {:.3}",
            p.initial_loss,
            last / p.initial_loss
        );
    }

    let chars: Vec<f64> = out
        .synthetic_manifest
        .records
        .iter()
        .map(|r| r.transcript.chars().filter(|c| *c != ' ').count() as f64)
        .collect();
    let durs: Vec<f64> =
        out.synthetic_manifest.records.iter().map(|r| r.duration_s).collect();
    println!(
        "synthetic: {} utterances, duration/chars pearson r = {:.3}",
        durs.len(),
        pearson(&chars, &durs)
    );
    let truncated =
        out.synthetic_manifest.records.iter().filter(|r| !r.flags.is_empty()).count();
    println!("truncated syntheses: {truncated}");
    println!("{}", out.report.to_table());
}
