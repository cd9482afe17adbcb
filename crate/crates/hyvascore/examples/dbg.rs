use hyvascore::inference::{asymptotic_mse, ContaminationSpec};
fn main() {
    let g = ContaminationSpec { eps: 0.1, clean: (0.0, 1.0), outlier: (5.0, 3.0) };
    for k in [1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0] {
        let r = asymptotic_mse(k, &g, 500).unwrap();
        println!(
            "kappa {k:5.1} bias2 {:9.5} var {:9.5} rmse {:8.4} active {} theta* ({:7.4}, {:6.3})",
            r.bias2, r.variance, r.rmse, r.constraint_active, r.theta_star.0, r.theta_star.1
        );
    }
}
