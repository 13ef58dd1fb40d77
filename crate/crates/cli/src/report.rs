use std::fmt::Write;

use guas_core::analyzer::Verdict;
use guas_core::matrix_core::StrictLyapunovReport;

fn num(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6e}")
    }
}

fn vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.12}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn render_verdict(v: &Verdict) -> String {
    let mut s = String::new();
    let m = &v.margins;
    let _ = writeln!(s, "conclusion: {}", v.conclusion.as_str());
    let _ = writeln!(s, "reason:     {}", v.branch);
    let _ = writeln!(
        s,
        "dim K = {}, dim K^perp = {}, kernel rank margin = {}",
        m.kernel_dim,
        m.output_dim,
        num(m.rank_margin)
    );
    let _ = writeln!(
        s,
        "spectral abscissas: {} / {}; weak Lyapunov max eigenvalues: {} / {}",
        num(m.hurwitz_abscissa[0]),
        num(m.hurwitz_abscissa[1]),
        num(m.lyapunov_max_eigenvalue[0]),
        num(m.lyapunov_max_eigenvalue[1])
    );
    if let (Some(om), Some(at)) = (m.observability_margin, m.observability_argmin) {
        let _ = writeln!(s, "observability margin: {} at λ = {at:.9}", num(om));
    }
    if let Some(im) = m.injectivity_margin {
        let _ = writeln!(s, "injectivity margin of C_λ: {}", num(im));
    }
    if let Some(w) = &v.witness {
        let _ = writeln!(s, "witness: λ* = {:.12}", w.lambda);
        let _ = writeln!(s, "  x* in K basis:     {}", vec(&w.x_kernel));
        let _ = writeln!(s, "  x* (normalized):   {}", vec(&w.x_normalized));
        let _ = writeln!(s, "  x* (input coords): {}", vec(&w.x_raw));
        let _ = writeln!(s, "  |Kalman(λ*) x*| = {}", num(w.kalman_residual));
    }
    if let Some(k) = &v.small_kernel {
        let _ = writeln!(s, "small-kernel diagnostic: {:?}", k.diagnostic);
    }
    if let Some(g) = &v.g_scan {
        let _ = writeln!(s, "tangency-set scan: {:?}", g.verdict);
        for l in &g.levels {
            let _ = writeln!(
                s,
                "  resolution {}: {} samples, {} hits, {} clusters (max diameter {}, max dimension {})",
                l.resolution,
                l.samples,
                l.hits,
                l.clusters,
                num(l.max_cluster_diameter),
                l.max_cluster_dimension
            );
        }
        for n in &g.notes {
            let _ = writeln!(s, "  note: {n}");
        }
    }
    for c in &v.endpoint_checks {
        let _ = writeln!(
            s,
            "endpoint λ = {}: Hurwitz {}, observable on its own kernel {}, agree {}",
            c.index, c.hurwitz, c.observable_on_own_kernel, c.agree
        );
    }
    if let Some(e) = &v.evidence {
        let _ = writeln!(
            s,
            "evidence: {} worst-case runs, T = {}, dt = {}: final norm ratio in [{}, {}], {} plateaued, {} not decaying",
            e.n_runs,
            e.t_end,
            e.dt,
            num(e.min_final_ratio),
            num(e.max_final_ratio),
            e.plateaued_runs,
            e.non_decaying_runs.len()
        );
        let _ = writeln!(s, "  note: {}", e.note);
    }
    for n in &v.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

pub fn render_strict(r: &StrictLyapunovReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "strict quadratic Lyapunov search: {}", r.verdict);
    let _ = writeln!(s, "  {}", r.restriction);
    for (i, c) in r.curves.iter().enumerate() {
        match &c.ellipse {
            Some(e) => {
                let _ = writeln!(
                    s,
                    "  det M{i} = 0: ellipse with vertices ({:.5}, {:.5}) and ({:.5}, {:.5})",
                    e.vertices[0].0, e.vertices[0].1, e.vertices[1].0, e.vertices[1].1
                );
            }
            None => {
                let _ = writeln!(s, "  det M{i} = 0 is not an ellipse");
            }
        }
    }
    s
}
