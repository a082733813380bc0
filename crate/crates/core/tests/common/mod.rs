#![allow(dead_code)]

use composite_charging::{CostFamily, GameSpec, ThreeSlotInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn family(i: usize) -> CostFamily {
    match i % 3 {
        0 => CostFamily::identity(),
        1 => CostFamily::quadratic(),
        _ => CostFamily::exponential(1.0).unwrap(),
    }
}

pub fn random_flow(rng: &mut ChaCha8Rng, len: usize, mass: f64) -> Vec<f64> {
    // sparse corners show up often enough to matter
    let raw: Vec<f64> = (0..len)
        .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>() })
        .collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        let mut v = vec![0.0; len];
        v[rng.gen_range(0..len)] = mass;
        return v;
    }
    raw.iter().map(|r| mass * r / total).collect()
}

pub fn random_game(seed: u64, horizon: Option<usize>) -> (GameSpec, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = horizon.unwrap_or_else(|| rng.gen_range(2..=8));
    let c = rng.gen_range(1..=t);
    let p = rng.gen_range(0.05..=1.0);
    let loads: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..3.0)).collect();
    let k = rng.gen_range(0..=2);
    let raw: Vec<f64> = (0..=k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let spec = GameSpec::new(t, c, p, loads, family(rng.gen_range(0..3)), weights.clone()).unwrap();
    let flows = weights
        .iter()
        .map(|&m| random_flow(&mut rng, spec.num_strategies(), m))
        .collect();
    (spec, flows)
}

pub fn random_instance(seed: u64, fam: usize) -> ThreeSlotInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rng.gen_range(0.0..3.0);
    let b = rng.gen_range(0.0..3.0);
    let l2 = rng.gen_range(0.0..3.0);
    let m = rng.gen_range(0.001..=1.0);
    ThreeSlotInstance::new(f64::max(a, b), l2, f64::min(a, b), m, family(fam)).unwrap()
}

/// Coalition average cost computed from scratch, for flows that need not lie
/// on the simplex.
pub fn oracle_coalition_cost(spec: &GameSpec, flows: &[Vec<f64>], k: usize, mass: f64) -> f64 {
    let t = spec.horizon();
    let c = spec.duration();
    let load = |x: &[f64]| -> Vec<f64> {
        (0..t)
            .map(|slot| {
                x.iter()
                    .enumerate()
                    .filter(|(s, _)| *s <= slot && slot < s + c)
                    .map(|(_, v)| v)
                    .sum()
            })
            .collect()
    };
    let z: Vec<f64> = flows.iter().map(|x| load(x)).fold(vec![0.0; t], |acc, y| {
        acc.iter().zip(&y).map(|(a, b)| a + b).collect()
    });
    let price: Vec<f64> = (0..t)
        .map(|slot| spec.cost().eval(spec.base_load()[slot] + spec.power() * z[slot]).unwrap())
        .collect();
    let y = load(&flows[k]);
    y.iter().zip(&price).map(|(a, b)| a * b).sum::<f64>() / mass
}

/// Loads `(L1 + x1, L2 + 1, L3 + 1 − x1)` of a three-slot instance in which
/// `x0 + x1` is the total weight on alternative 1.
pub fn three_slot_loads(inst: &ThreeSlotInstance, x0: f64, x1: f64) -> [f64; 3] {
    let [l1, l2, l3] = inst.loads();
    let peak = x0 + x1;
    [l1 + peak, l2 + 1.0, l3 + 1.0 - peak]
}

/// Strategy costs of a three-slot instance computed from scratch.
pub fn three_slot_strategy_costs(inst: &ThreeSlotInstance, x0: f64, x1: f64) -> [f64; 2] {
    let f = inst.cost();
    let [a, b, c] = three_slot_loads(inst, x0, x1).map(|v| f.eval(v).unwrap());
    [a + b, b + c]
}

/// Coalition average cost of a three-slot instance computed from scratch.
pub fn three_slot_coalition_cost(inst: &ThreeSlotInstance, x0: f64, x1: f64) -> f64 {
    let [u1, u2] = three_slot_strategy_costs(inst, x0, x1);
    let m = inst.coalition_size();
    (x1 * u1 + (m - x1) * u2) / m
}
