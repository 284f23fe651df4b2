//! Plain-text dump of one trial's estimates next to the truth.

use std::fmt::Write;

use isac_core::solver::{Detection, Estimates};

use crate::config::Method;
use crate::metrics::TrialMetrics;
use crate::scenario::Trial;

fn detections(out: &mut String, label: &str, d: &[Detection<f64>]) {
    let _ = writeln!(out, "  {label}: {}", d.len());
    for x in d {
        let _ = writeln!(
            out,
            "    col {:>4}  pos ({:9.3}, {:9.3})  gain {:+.4e}{:+.4e}i  prob {:.4}",
            x.column, x.position.x, x.position.y, x.gain.re, x.gain.im, x.prob
        );
    }
}

pub fn trial_header(t: &Trial) -> String {
    let mut out = String::new();
    let s = &t.scene;
    let _ = writeln!(out, "trial {}  snr {} dB", t.trial, t.snr_db);
    let _ = writeln!(
        out,
        "noise variances: radar {:.4e}  comm {:.4e}",
        t.obs.noise_var_r, t.obs.noise_var_c
    );
    let _ = writeln!(out, "truth");
    let _ = writeln!(
        out,
        "  user ({:.3}, {:.3})  time offset {:.4e} s",
        s.user.x, s.user.y, s.time_offset
    );
    for (label, list) in [("targets", &s.targets), ("scatterers", &s.scatterers)] {
        let _ = writeln!(out, "  {label}: {}", list.len());
        for e in list {
            let _ = writeln!(
                out,
                "    pos ({:9.3}, {:9.3})  gain {:+.4e}{:+.4e}i",
                e.position.x, e.position.y, e.gain.re, e.gain.im
            );
        }
    }
    out
}

pub fn estimate_section(method: Method, est: &Estimates<f64>, m: &TrialMetrics) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "method {}", method.name());
    let _ = writeln!(
        out,
        "  user ({:.3}, {:.3})  time offset {:.4e} s",
        est.user_pos.x, est.user_pos.y, est.time_offset
    );
    detections(&mut out, "detected targets", &est.detected_targets);
    detections(&mut out, "detected scatterers", &est.detected_scatterers);
    let d = &est.diagnostics;
    let _ = writeln!(
        out,
        "  em iterations {}  turbo iterations {:?}  turbo converged {}  max loading {:.3e}",
        d.em_iters, d.turbo_iters, d.turbo_converged, d.regularization
    );
    for (i, (a, b)) in d.surrogate_trace.iter().enumerate() {
        let _ = writeln!(out, "    m-step {i}: surrogate {a:.6e} -> {b:.6e}");
    }
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4e}"));
    let _ = writeln!(
        out,
        "  rmse target {:.4} (miss {}, fa {})  rmse scatterer {:.4} (miss {}, fa {})",
        m.target.rmse,
        m.target.misses,
        m.target.false_alarms,
        m.scatterer.rmse,
        m.scatterer.misses,
        m.scatterer.false_alarms
    );
    let _ = writeln!(
        out,
        "  nmse radar {}  nmse comm {}  user error {:.4} m  time offset error {:.4e} s",
        opt(m.nmse_radar),
        opt(m.nmse_comm),
        m.user_pos_error,
        m.tau_offset_error
    );
    out
}
