//! Sample sizes and truncation levels that reach a target accuracy.

use mcco::schedules::{saa_schedule, truncation_schedule};
use mcco::{ProblemConstants, ScheduleMode};

fn main() -> mcco::Result<()> {
    let c = ProblemConstants {
        stages: 3,
        lipschitz: Some(vec![1.0; 3]),
        smoothness: Some(vec![1.0; 3]),
        sigma: Some(vec![1.0; 3]),
        mu_bar: [(2, 1.0), (4, 1.0), (8, 1.0)].into_iter().collect(),
        dims: Some(vec![1; 4]),
        ..Default::default()
    };
    for eps in [0.2, 0.1, 0.05] {
        let saa = saa_schedule(eps, &c, true, ScheduleMode::Mse)?;
        let mlmc = truncation_schedule(eps, &c, true, ScheduleMode::Mse)?;
        println!(
            "eps {eps:<5} saa n = {saa:?}  mlmc n1 = {} M = {:?}",
            mlmc.n1, mlmc.truncations
        );
    }
    let c = ProblemConstants { zeta2: Some(1.0), diameter: Some(2.0), l_prime: Some(1.0), ..c };
    let hp = truncation_schedule(0.1, &c, false, ScheduleMode::HighProb { beta: 0.05 })?;
    println!("high probability (beta 0.05), nonsmooth: n1 = {} M = {:?}", hp.n1, hp.truncations);
    Ok(())
}
