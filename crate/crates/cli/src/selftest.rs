//! Quick invariant checks on small problems, one line per check.

use std::time::Instant;

use marforge_core::io::{decode_tensor, encode_tensor};
use marforge_core::networks::{NetworkConfig, NetworkSet, TraceGate};
use marforge_core::physics::{Simulator, SpectralModel};
use marforge_core::pipeline::{phase1, phase2, Batch, Generators, Reconstructor};
use marforge_core::tomography::{Mask, Tomography};
use marforge_core::{Geometry, Graph, Result, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{CliError, CliResult};

const SMALL: NetworkConfig = NetworkConfig {
    pnet_depth: 2,
    pnet_base: 4,
    snet_depth: 2,
    snet_base: 4,
    inet_depth: 3,
    inet_base: 4,
    max_channels: 8,
    disc_base: 4,
};

struct Check {
    name: &'static str,
    run: fn() -> Result<(bool, String)>,
}

pub fn run() -> CliResult<()> {
    let checks = [
        Check { name: "raw-round-trip", run: raw_round_trip },
        Check { name: "adjoint", run: adjoint },
        Check { name: "additive-artifact", run: additive_artifact },
        Check { name: "identity-start", run: identity_start },
        Check { name: "cycle-identity", run: cycle_identity },
    ];
    let mut failed = 0;
    for check in &checks {
        let start = Instant::now();
        let (ok, detail) = match (check.run)() {
            Ok(r) => r,
            Err(e) => (false, format!("error[{}]: {e}", e.category())),
        };
        let status = if ok { "PASS" } else { "FAIL" };
        println!("{status} {:<18} {detail} ({:.2?})", check.name, start.elapsed());
        failed += usize::from(!ok);
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Selftest(failed))
    }
}

fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..shape.numel()).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn raw_round_trip() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = random_tensor(Shape::new(2, 3, 5, 7), &mut rng);
    let back = decode_tensor(&encode_tensor(&t))?;
    Ok((back == t, "bit-exact".into()))
}

fn adjoint() -> Result<(bool, String)> {
    let tomo = Tomography::new(Geometry::square(48, 60)?)?;
    let g = *tomo.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let x = random_tensor(g.image_shape(), &mut rng);
        let y = random_tensor(g.sino_shape(), &mut rng);
        let lhs = dot(&tomo.forward_project(&x)?, &y);
        let rhs = dot(&x, &tomo.back_project(&y)?);
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    Ok((worst <= 1e-4, format!("max relative error {worst:.2e}")))
}

fn additive_artifact() -> Result<(bool, String)> {
    let sim = Simulator::new(Geometry::square(64, 90)?, SpectralModel::default())?;
    let mut worst = 0.0f32;
    for seed in 0..3 {
        let case = sim.simulate_case(seed)?;
        let f = sim.artifact_image(&case.phantom)?;
        let rebuilt = case.i_ac.add(&f)?;
        worst = worst.max(case.i_a.sub(&rebuilt)?.max_abs());
    }
    Ok((worst <= 1e-5, format!("max |I_a - (I_ac + F)| = {worst:.2e} mm^-1")))
}

fn small_batch(rec: &Reconstructor, sim: &Simulator, empty_mask: bool) -> Result<Batch> {
    let case = sim.simulate_case(5)?;
    let n = sim.geometry().image_size;
    let (img, mask) = if empty_mask {
        (case.i_ac, Mask::empty(n, n))
    } else {
        (case.i_a, case.mask)
    };
    let art = rec.artifact_case(&rec.normalize(&img), &mask, None)?;
    let clean = rec.clean_case(&rec.normalize(&case.i_c))?;
    Batch::new(&[&art], &[&clean])
}

fn identity_start() -> Result<(bool, String)> {
    let sim = Simulator::new(Geometry::square(32, 36)?, SpectralModel::default())?;
    let rec = Reconstructor::new(*sim.geometry(), sim.mu_water() as f32)?;
    let nets = NetworkSet::new(SMALL, TraceGate::InsideTrace, 0)?;
    let batch = small_batch(&rec, &sim, true)?;
    let mut g = Graph::new();
    let gens = Generators::bind(&mut g, &nets, true, false);
    let one = phase1(&mut g, &rec, &gens, &batch)?;
    let two = phase2(&mut g, &rec, &gens, &batch, &one)?;
    let zero = g.value(one.a_s).max_abs() == 0.0 && g.value(one.a_i).max_abs() == 0.0;
    let same = *g.value(one.i_ac) == batch.i_a && Some(g.value(two.i_cac)) == batch.i_c.as_ref();
    Ok((zero && same, "zero components, I_ac = I_a, I_cac = I_c".into()))
}

fn cycle_identity() -> Result<(bool, String)> {
    let sim = Simulator::new(Geometry::square(32, 36)?, SpectralModel::default())?;
    let rec = Reconstructor::new(*sim.geometry(), sim.mu_water() as f32)?;
    let mut nets = NetworkSet::new(SMALL, TraceGate::InsideTrace, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for store in [&mut nets.snet_params, &mut nets.inet_params] {
        let names: Vec<String> = store.names().map(str::to_owned).collect();
        for name in names {
            let p = store.get_mut(&name).expect("listed name");
            *p = random_tensor(p.shape(), &mut rng).scale(0.05);
        }
    }
    let batch = small_batch(&rec, &sim, false)?;
    let mut g = Graph::new();
    let gens = Generators::bind(&mut g, &nets, true, false);
    let one = phase1(&mut g, &rec, &gens, &batch)?;
    let two = phase2(&mut g, &rec, &gens, &batch, &one)?;
    let ra = batch.i_a.sub(g.value(two.i_aca))?.map(f32::abs);
    let rc = batch.i_c.as_ref().expect("batch has a clean partner").sub(g.value(two.i_cac))?.map(f32::abs);
    let gap = ra.sub(&rc)?.max_abs() * rec.mu_water();
    Ok((gap <= 1e-6, format!("max ||I_a - I_aca| - |I_c - I_cac|| = {gap:.2e} mm^-1")))
}
