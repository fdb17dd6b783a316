use flightlab::edgeworth::{expansion_error_scan, ScanOptions};
use flightlab::ellipsoid_chain::CoefficientField;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("ou");
    let m: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1601);
    let steps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1600);
    let nodes: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(48);
    let coeffs = match which {
        "ou" => CoefficientField::linear_drift(-0.5, 1.0),
        _ => CoefficientField::sine_sigma(),
    };
    let x0 = if which == "ou" { 0.3 } else { 0.0 };
    let opts = ScanOptions {
        grid_m: m,
        pde_steps: steps,
        corr_nodes: nodes,
        corr_solver_steps: 400,
        window_halfwidth: 4.0,
        stability_tol: 0.10,
        ..Default::default()
    };
    let t = std::time::Instant::now();
    let scan = expansion_error_scan(&coeffs, x0, &[16, 32, 64], &opts).unwrap();
    println!(
        "case={which} m={m} steps={steps} nodes={nodes} elapsed={:?}",
        t.elapsed()
    );
    println!(
        "mass_drift={:.3e} stability={:.3e} freeze_disc={:.3e}",
        scan.mass_drift, scan.correction_stability, scan.freeze_discrepancy
    );
    for r in &scan.rows {
        println!(
            "n={:3}  err={:.6e}  err_no_corr={:.6e}  err_term={:.6e}  improve={}",
            r.n,
            r.err,
            r.err_no_corr,
            r.err_terminal_freeze,
            r.err < r.err_no_corr
        );
    }
    for (n, ratio) in scan.doubling_ratios() {
        println!("ratio err({})/err({}) = {:.4}", 2 * n, n, ratio);
    }
}
