use serde::Serialize;
use wdistortion::limits::{
    cesaro_check, fidelity_limit_table, realism_limit_table, ConvergenceTable, IidLaw, Seq1D,
};
use wdistortion::pooling::{check_pmf_axioms, make_tsg_pmf, AxiomGrid, DEFAULT_TAIL_MASS_BOUND};
use wdistortion::{PoolingPmf, Result as CoreResult};

use crate::config::PmfFamily;
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, write_json, write_text};
use crate::Ctx;

#[derive(Serialize)]
struct Verdict {
    check: String,
    passed: bool,
    detail: String,
}

fn build_pmf(family: PmfFamily, sigma: f64) -> CoreResult<PoolingPmf<f64>> {
    let base = make_tsg_pmf(sigma, DEFAULT_TAIL_MASS_BOUND)?;
    match family {
        PmfFamily::TwoSidedGeometric => Ok(base),
        PmfFamily::Asymmetric => {
            let r = base.radius();
            if r == 0 {
                return Ok(base);
            }
            let mut w = base.weights().to_vec();
            for k in 0..r {
                w[2 * r - k] += w[k];
                w[k] = 0.0;
            }
            PoolingPmf::from_weights(sigma, r, w)
        }
    }
}

fn table_verdict(name: &str, t: &ConvergenceTable) -> Verdict {
    Verdict {
        check: name.into(),
        passed: t.passed,
        detail: format!("final error {:e} (tolerance {:e})", t.final_error(), t.tolerance),
    }
}

pub fn run(ctx: &Ctx) -> CliResult<()> {
    let out = ctx.out()?;
    let cfg = &ctx.config.limits;
    ensure_dir(out)?;
    let mut verdicts = Vec::new();

    let mut grid = AxiomGrid::new(cfg.axiom_sigmas.clone());
    grid.max_offset = cfg.axiom_max_offset;
    let family = cfg.pmf;
    let axioms = check_pmf_axioms(&grid, |s| build_pmf(family, s))?;
    write_json(&out.join("axioms.json"), &axioms)?;
    for c in &axioms.checks {
        verdicts.push(Verdict {
            check: format!("pmf {}", c.axiom),
            passed: c.passed,
            detail: c.detail.clone(),
        });
    }

    let alt = Seq1D::periodic(vec![0.0, 1.0])?;
    let alt_hat = Seq1D::periodic(vec![1.0, 0.0])?;
    let fid = fidelity_limit_table(&alt, &alt_hat, 2.0, &cfg.fidelity_sigmas, cfg.fidelity_tol)?;
    write_text(&out.join("fidelity.csv"), &fid.to_csv())?;
    verdicts.push(table_verdict("fidelity limit, alternating, p=2", &fid));

    let z = Seq1D::periodic(vec![0.0, 0.0, 1.0])?;
    let z_hat = Seq1D::periodic(vec![1.0, 1.0, 0.0])?;
    let real = realism_limit_table(&z, &z_hat, 1.0, &cfg.realism_sigmas, cfg.realism_tol)?;
    write_text(&out.join("realism.csv"), &real.to_csv())?;
    verdicts.push(table_verdict("realism limit, period 3, p=1", &real));

    let law = IidLaw::Uniform { lo: 0.0, hi: 1.0 };
    let seed = ctx.config.seed;
    let iid = realism_limit_table(
        &Seq1D::iid(law, seed.wrapping_mul(2).wrapping_add(1))?,
        &Seq1D::iid(law, seed.wrapping_mul(2).wrapping_add(2))?,
        1.0,
        &cfg.realism_sigmas,
        cfg.iid_tol,
    )?;
    write_text(&out.join("iid.csv"), &iid.to_csv())?;
    verdicts.push(table_verdict("realism limit, iid uniform copies, p=1", &iid));

    let rows = cesaro_check(cfg.cesaro_sigma, cfg.cesaro_tol)?;
    let mut csv = String::from("name,sigma,weighted_sum,cesaro_mean,abs_error,passed\n");
    for r in &rows {
        csv += &format!("{},{},{},{},{},{}\n", r.name, r.sigma, r.weighted_sum, r.cesaro_mean, r.abs_error, r.passed);
        verdicts.push(Verdict {
            check: format!("cesaro {}", r.name),
            passed: r.passed,
            detail: format!("abs error {:e}", r.abs_error),
        });
    }
    write_text(&out.join("cesaro.csv"), &csv)?;

    write_json(&out.join("verdicts.json"), &verdicts)?;
    for v in &verdicts {
        println!("[{}] {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.check, v.detail);
    }
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} of {} checks failed", verdicts.len())));
    }
    Ok(())
}
