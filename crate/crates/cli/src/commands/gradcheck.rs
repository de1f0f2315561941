use clap::Args;
use iidm_core::diffusion::check_denoiser;
use iidm_core::numerics::gradcheck::GradCheck;
use iidm_core::numerics::{primitive_suite, Primitive};
use iidm_core::Error;

use super::{write_text, CliError, CliResult, Context};

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Break the backward rule of this primitive (negative control).
    #[arg(long)]
    pub fault: Option<String>,
    /// Entries sampled per model parameter tensor.
    #[arg(long, default_value_t = 6)]
    pub model_entries: usize,
}

pub const REPORT_HEADER: &str = "block,max_rel_err,checked,passed";

pub fn run(ctx: &Context, a: &GradcheckArgs) -> CliResult<()> {
    let fault = match &a.fault {
        Some(name) => Some(Primitive::from_name(name).ok_or_else(|| {
            let known: Vec<&str> = Primitive::ALL.iter().map(|p| p.name()).collect();
            Error::InvalidArgument(format!("unknown primitive {name:?}; known: {}", known.join(", ")))
        })?),
        None => None,
    };
    let check = GradCheck { seed: ctx.config.seed, fault, ..GradCheck::default() };
    let mut lines = vec![REPORT_HEADER.to_string()];
    let mut failed = Vec::new();
    for (p, r) in primitive_suite(&check)? {
        let ok = r.passed();
        lines.push(format!("primitive:{},{:e},{},{ok}", p.name(), r.max_rel_err(), r.checked()));
        if !ok {
            failed.push(format!("primitive {}", p.name()));
        }
    }
    let model = ctx.config.model.iidm()?;
    let size = model.size_multiple().max(8);
    // Float32 summation over the full network rounds at about 1e-4, so the
    // composed model is differentiated in f64.
    let mcheck = GradCheck { max_entries: a.model_entries, analytic_f64: true, ..check };
    let r = check_denoiser(&model, size, &mcheck)?;
    for (block, err, n) in r.blocks() {
        lines.push(format!("model:{block},{err:e},{n},{}", err < r.tol));
    }
    if !r.passed() {
        failed.push(format!("model (max rel err {:e}, {} kinks)", r.max_rel_err(), r.kinks()));
    }
    let text = lines.join("\n") + "\n";
    print!("{text}");
    write_text(&ctx.output("gradcheck.csv")?, &text)?;
    if failed.is_empty() {
        println!("gradcheck: pass");
        Ok(())
    } else {
        Err(CliError::GradCheck(failed.join(", ")))
    }
}
