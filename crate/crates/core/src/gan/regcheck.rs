//! Finite-difference cases for the regularizers on small real networks,
//! differentiated both with respect to inputs and to weights.

use super::{init_critic, init_generator, lipschitz_l1_penalty, ppl_noise, ppl_penalty, r1_penalty};
use super::{critic_forward, generate, GanConfig, GanError, ParamSet};
use crate::autograd::suite::{randn, OpCase, OpFn};
use crate::autograd::{AutogradError, Graph, Tensor, Var};
use crate::rng;

/// Relative error bound for the regularizer cases.
pub const REG_TOL: f64 = 1e-3;

/// Network size used by the cases: 8x8 images, narrow layers.
pub fn tiny_config(seed: u64) -> GanConfig {
    GanConfig {
        image_size: 8,
        channels: 2,
        style_dim: 4,
        mapping_layers: 1,
        feature_dim: 4,
        base_channels: 3,
        seed,
        ..GanConfig::default()
    }
}

fn lower(e: GanError) -> AutogradError {
    match e {
        GanError::Autograd(a) => a,
        other => AutogradError::Shape { op: "network", detail: other.to_string() },
    }
}

/// Which tensor a case differentiates.
#[derive(Clone, Copy)]
enum Wrt {
    Input,
    Weight(&'static str),
}

fn critic_closure(
    cfg: GanConfig,
    params: ParamSet,
    wrt: Wrt,
    fixed_input: Tensor,
    term: impl Fn(&mut Graph, &dyn Fn(&mut Graph, Var) -> Result<Var, GanError>, Var) -> Result<Var, GanError> + 'static,
) -> impl Fn(&mut Graph, Var) -> Result<Var, AutogradError> {
    move |g, v| {
        let mut bound = params.bind(g, false);
        let x = match wrt {
            Wrt::Input => v,
            Wrt::Weight(name) => {
                bound.replace(name, v).map_err(lower)?;
                g.constant(fixed_input.clone())
            }
        };
        let critic = |g: &mut Graph, x: Var| critic_forward(g, &bound, &cfg, x);
        term(g, &critic, x).map_err(lower)
    }
}

/// R1, Lipschitz-L1 and path-length cases for one seed.
pub fn regularizer_cases(seed: u64) -> Vec<OpCase> {
    let cfg = tiny_config(seed);
    let mut r = rng::stream(seed, &[rng::tag("reg-suite")]);
    let critic = init_critic(&cfg, &mut r);
    let generator = init_generator(&cfg, &mut r);
    let n = 2;
    let img = [n, cfg.channels, cfg.image_size, cfg.image_size];
    let real = randn(&mut r, &img);
    let fake = randn(&mut r, &img);
    let mut cases = Vec::new();
    let mut push = |name: &'static str, input: Tensor, f: OpFn| {
        cases.push(OpCase { name, input, f, tol: REG_TOL });
    };

    let r1 = |g: &mut Graph, d: &dyn Fn(&mut Graph, Var) -> Result<Var, GanError>, x: Var| {
        r1_penalty(g, |g: &mut Graph, x: Var| d(g, x), x, 10.0)
    };
    push(
        "r1_wrt_images",
        real.clone(),
        Box::new(critic_closure(cfg.clone(), critic.clone(), Wrt::Input, real.clone(), r1)),
    );
    let w0 = critic.get("fromrgb.weight").expect("critic layout").clone();
    push(
        "r1_wrt_critic_weight",
        w0.clone(),
        Box::new(critic_closure(cfg.clone(), critic.clone(), Wrt::Weight("fromrgb.weight"), real.clone(), r1)),
    );

    let fk = fake.clone();
    let lip = move |g: &mut Graph, d: &dyn Fn(&mut Graph, Var) -> Result<Var, GanError>, x: Var| {
        let f = g.constant(fk.clone());
        lipschitz_l1_penalty(g, |g: &mut Graph, x: Var| d(g, x), x, f)
    };
    push(
        "lipschitz_l1_wrt_images",
        real.clone(),
        Box::new(critic_closure(cfg.clone(), critic.clone(), Wrt::Input, real.clone(), lip.clone())),
    );
    let wb = critic.get("b4.conv.weight").expect("critic layout").clone();
    push(
        "lipschitz_l1_wrt_critic_weight",
        wb,
        Box::new(critic_closure(cfg.clone(), critic.clone(), Wrt::Weight("b4.conv.weight"), real.clone(), lip)),
    );

    let noise = ppl_noise(&mut r, &img);
    let w_styles = randn(&mut r, &[n, cfg.style_dim]);
    // Running mean near the typical length, so the penalty is not dominated
    // by a constant offset.
    let running = 0.5;
    let (gc, gp, nz) = (cfg.clone(), generator.clone(), noise.clone());
    push(
        "ppl_wrt_styles",
        w_styles.clone(),
        Box::new(move |g, w| {
            let bound = gp.bind(g, false);
            let gen = |g: &mut Graph, w: Var| generate(g, &bound, &gc, w);
            Ok(ppl_penalty(g, gen, w, &nz, running, 0.01).map_err(lower)?.penalty)
        }),
    );
    let name = "synth.b8.conv0.weight";
    let wg = generator.get(name).expect("generator layout").clone();
    let (gc, gp) = (cfg.clone(), generator.clone());
    push(
        "ppl_wrt_generator_weight",
        wg,
        Box::new(move |g, v| {
            let mut bound = gp.bind(g, false);
            bound.replace(name, v).map_err(lower)?;
            let w = g.constant(w_styles.clone());
            let gen = |g: &mut Graph, w: Var| generate(g, &bound, &gc, w);
            Ok(ppl_penalty(g, gen, w, &noise, running, 0.01).map_err(lower)?.penalty)
        }),
    );
    cases
}
