//! Scratch probe (temporary).
use polarmem::code::CodeFamily;
use polarmem::sim::{estimate_fer, GeParams, Regime, SimConfig};

#[test]
fn probe_bsc_gap() {
    for h in [0.06f64] {
        for family in [CodeFamily::Polar, CodeFamily::ConvPolar] {
            let ch = GeParams { h_g: h, h_b: h, p_gb: 0.5, p_bg: 0.5 };
            let mut cfg = SimConfig::new(family, 8, 128, ch, Regime::Corr);
            cfg.max_frames = 6000;
            cfg.max_frame_errors = 600;
            cfg.seed = 77;
            let res = estimate_fer(&cfg).unwrap();
            eprintln!("h={h} {}: fer={:.4} ({}/{})", family.short(), res.fer, res.frame_errors, res.frames);
        }
    }
}
