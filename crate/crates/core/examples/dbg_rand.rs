use csforge_core::design::*;
use csforge_core::model::*;

fn main() {
    let n = 8;
    let k = 2;
    let r = exponential_covariance(k, 0.5, 1.0).unwrap();
    let model = SourceModel::new(n, k, r.clone()).unwrap();
    let rx = source_covariance(&model, CovarianceMode::Analytic).unwrap();
    let spec = ChannelSpec::identity(n, 0.5, 0.0, 0.5, 4, 3.0).unwrap();
    let supports = SupportCollection::exact(n, k).unwrap();
    let opts = SolverOpts::default();
    let proc = design_procedure1(&spec, &r, &rx, &supports, opts, None).unwrap();
    let d = proc.solver_diag.as_ref().unwrap();
    println!(
        "proc lb {:.9} obj {:.6} iters {} feas {:.2e} conv {:.2e}",
        proc.lb_value.value, d.objective, d.iterations, d.feas_residual, d.conv_residual
    );
    let (q, _, _) = procedure1_gram(&spec, &r, &rx, &supports, opts, None).unwrap();
    for nr in [1, 10, 20] {
        let rr = design_randomization(&spec, &r, &rx, &supports, nr, 9, Some(&q), opts).unwrap();
        println!("rand{} lb {:.9}", nr, rr.lb_value.value);
    }
}
