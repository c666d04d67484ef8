//! Train on a synthetic turntable and report held-out quality.
//!
//! `cargo run --release -p darksplat-core --example turntable -- [seed] [iterations]`

use darksplat_core::provider::{ProviderConfig, PseudoBrightProvider};
use darksplat_core::synth::{generate_turntable, TurntableConfig};
use darksplat_core::train::{evaluate_views, held_out_views, train, NoopObserver, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let iterations: usize = args.next().map_or(Ok(3000), |s| s.parse())?;

    let (_, dataset) = generate_turntable(&TurntableConfig { seed, ..Default::default() })?;
    let config = TrainConfig { iterations, seed, ..Default::default() };
    let provider = PseudoBrightProvider::new(ProviderConfig { seed, ..Default::default() }, dataset.bright_frames.clone())?;

    let start = std::time::Instant::now();
    let out = train(&dataset, &config, &provider, &mut NoopObserver)?;
    let (psnr, ssim) = evaluate_views(&out.scene, &dataset, &held_out_views(&dataset, &config), config.background)?;
    println!("seed={seed} psnr={psnr:.3} ssim={ssim:.4} time={:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
