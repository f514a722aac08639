//! LQR and entropic-risk nests against their closed forms.

use mcco::problem::scalar;
use mcco::problems::{entropic, entropic_exact_value, Lqr, LqrParams};
use mcco::{mlmc_value_estimate, ExecOptions, MlmcConfig, RngStream};

fn main() -> mcco::Result<()> {
    let exec = ExecOptions::default();
    let cfg = MlmcConfig::truncated(50_000, &[0.6, 0.6], &[6, 6])?;

    let params: LqrParams = serde_json::from_str(
        r#"{"stages": 3, "a": [[1.0, 0.2], [0.0, 0.9]], "b": [[0.5], [1.0]],
            "q": [[1.0, 0.0], [0.0, 2.0]], "r": [[0.5]], "p_t": [[1.0, 0.1], [0.1, 1.0]],
            "s0": [1.0, -1.0], "sigma": [[1.0, 0.2], [0.2, 0.5]]}"#,
    )
    .map_err(|e| mcco::MccoError::InvalidParams(e.to_string()))?;
    let lq = Lqr::new(&params)?;
    let r = mlmc_value_estimate(&lq.problem()?, &lq.terminal_decision(), &cfg, &RngStream::new(1), &exec)?;
    println!("lqr       {:.4} +- {:.4}  exact {:.4}", r.value, r.stderr(), lq.exact_value()?);

    let (mu, means, sds) = ([0.5, 1.0, 0.8], [0.1, -0.2, 0.3], [0.6, 0.5, 0.7]);
    let r = mlmc_value_estimate(&entropic(&mu, &means, &sds)?, &scalar(0.0), &cfg, &RngStream::new(2), &exec)?;
    println!("entropic  {:.4} +- {:.4}  exact {:.4}", r.value, r.stderr(), entropic_exact_value(&mu, &means, &sds)?);
    Ok(())
}
