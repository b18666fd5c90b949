//! Agent-domain and inter-agent potentials, their gradients, and the
//! damped gradient-descent controller used as the expert.
//!
//! The agent-domain term penalises agents whose signed boundary distance is
//! above `-r_d/2`; the pair term penalises agents closer than `r_d`. Both are
//! zero exactly on `r_d`-subcover configurations.

use serde::{Deserialize, Serialize};

use crate::dynamics::{clamp_norm, SwarmState};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryProjection, Polygon, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    /// Coverage radius.
    pub r_d: f64,
    /// Velocity damping of the classical controller.
    pub c: f64,
}

impl PotentialParams {
    pub const DEFAULT_DAMPING: f64 = 1.0;

    pub fn new(r_d: f64, c: f64) -> Result<Self> {
        if !(r_d > 0.0 && r_d.is_finite()) {
            return Err(Error::invalid(format!("r_d must be positive, got {r_d}")));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("damping must be non-negative, got {c}")));
        }
        Ok(Self { r_d, c })
    }

    /// Parameters for `n` agents in `poly` with the default damping.
    pub fn for_domain(poly: &Polygon, n: usize) -> Result<Self> {
        Self::new(poly.coverage_radius(n)?, Self::DEFAULT_DAMPING)
    }
}

pub fn agent_domain_potential(sd: f64, r_d: f64) -> f64 {
    let shifted = sd + 0.5 * r_d;
    if shifted <= 0.0 {
        0.0
    } else {
        0.5 * shifted * shifted
    }
}

/// Gradient of the agent-domain potential with respect to the agent position.
pub fn agent_domain_gradient(proj: &BoundaryProjection, r_d: f64) -> Vec2 {
    let shifted = proj.signed_distance() + 0.5 * r_d;
    if shifted <= 0.0 {
        return Vec2::ZERO;
    }
    proj.direction() * (shifted * proj.indicator())
}

pub fn pair_potential(dist: f64, r_d: f64) -> f64 {
    if dist < r_d {
        let gap = dist - r_d;
        0.5 * gap * gap
    } else {
        0.0
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Unit vector standing in for the direction between coincident agents `i`
/// and `j`. Swapping the pair negates it.
pub fn coincident_direction(i: usize, j: usize) -> Vec2 {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    let h = splitmix64(((lo as u64) << 32) ^ hi as u64 ^ 0x5eed);
    let angle = (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
    let u = Vec2::new(angle.cos(), angle.sin());
    if i < j {
        u
    } else {
        -u
    }
}

/// Gradient of `U_I(p_i - p_j)` with respect to `p_i`, where `offset = p_i - p_j`.
pub fn pair_gradient(offset: Vec2, r_d: f64, i: usize, j: usize) -> Vec2 {
    let dist = offset.norm();
    if dist >= r_d {
        return Vec2::ZERO;
    }
    let dir = if dist > 0.0 { offset / dist } else { coincident_direction(i, j) };
    dir * (dist - r_d)
}

fn pair_sum(i: usize, swarm: &SwarmState, r_d: f64) -> f64 {
    let pi = swarm.agents[i].p;
    swarm
        .agents
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, other)| pair_potential(pi.distance(other.p), r_d))
        .sum()
}

/// `2 U_h(p_i) + sum_{j != i} U_I(p_i - p_j)`.
pub fn individual_potential(i: usize, swarm: &SwarmState, poly: &Polygon, params: &PotentialParams) -> f64 {
    let sd = poly.signed_distance(swarm.agents[i].p);
    2.0 * agent_domain_potential(sd, params.r_d) + pair_sum(i, swarm, params.r_d)
}

pub fn individual_potentials(swarm: &SwarmState, poly: &Polygon, params: &PotentialParams) -> Vec<f64> {
    (0..swarm.len()).map(|i| individual_potential(i, swarm, poly, params)).collect()
}

/// Sum of individual potentials; each pair is counted once per member.
pub fn total_potential(swarm: &SwarmState, poly: &Polygon, params: &PotentialParams) -> f64 {
    individual_potentials(swarm, poly, params).iter().sum()
}

/// Controller acceleration before saturation.
pub fn classical_control_unclamped(swarm: &SwarmState, poly: &Polygon, params: &PotentialParams) -> Vec<Vec2> {
    let agents = &swarm.agents;
    agents
        .iter()
        .enumerate()
        .map(|(i, agent)| {
            let proj = poly.project_to_boundary(agent.p);
            let mut grad = agent_domain_gradient(&proj, params.r_d);
            for (j, other) in agents.iter().enumerate() {
                if j != i {
                    grad += pair_gradient(agent.p - other.p, params.r_d, i, j);
                }
            }
            -grad - agent.v * params.c
        })
        .collect()
}

/// Damped negative-gradient controller, saturated at `a_max`.
pub fn classical_control(swarm: &SwarmState, poly: &Polygon, params: &PotentialParams, a_max: f64) -> Vec<Vec2> {
    classical_control_unclamped(swarm, poly, params).into_iter().map(|a| clamp_norm(a, a_max)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_step, AgentState, DynamicsConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const R: f64 = 1.0 / 3.0;

    pub(crate) fn grid3() -> SwarmState {
        let mut pos = Vec::new();
        for b in 0..3 {
            for a in 0..3 {
                pos.push(Vec2::new(1.0 / 6.0 + a as f64 / 3.0, 1.0 / 6.0 + b as f64 / 3.0));
            }
        }
        SwarmState::at_rest(&pos)
    }

    fn params() -> PotentialParams {
        PotentialParams::new(R, 1.0).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn domain_potential_examples() {
        assert_eq!(agent_domain_potential(-0.5, R), 0.0);
        assert!((agent_domain_potential(0.0, R) - 1.0 / 72.0).abs() < 1e-15);
        assert!((agent_domain_potential(R, R) - 0.125).abs() < 1e-15);
        assert_eq!(agent_domain_potential(-R / 2.0, R), 0.0);
    }

    #[test]
    fn domain_gradient_examples() {
        let sq = Polygon::unit_square();
        assert_eq!(agent_domain_gradient(&sq.project_to_boundary(Vec2::new(0.2, 0.5)), R), Vec2::ZERO);
        let g = agent_domain_gradient(&sq.project_to_boundary(Vec2::new(1.5, 0.5)), R);
        assert!((g - Vec2::new(2.0 / 3.0, 0.0)).norm() < 1e-15);
        // on the boundary the gradient points outward with magnitude r_d/2
        let g = agent_domain_gradient(&sq.project_to_boundary(Vec2::new(1.0, 0.5)), R);
        assert!((g - Vec2::new(R / 2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pair_examples() {
        assert_eq!(pair_potential(0.5, R), 0.0);
        assert!((pair_potential(1.0 / 6.0, R) - 1.0 / 72.0).abs() < 1e-15);
        assert_eq!(pair_potential(R, R), 0.0);
        assert_eq!(pair_gradient(Vec2::new(0.5, 0.0), R, 0, 1), Vec2::ZERO);
        let g = pair_gradient(Vec2::new(1.0 / 6.0, 0.0), R, 0, 1);
        assert!((g - Vec2::new(-1.0 / 6.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn coincident_pair_is_deterministic_and_antisymmetric() {
        let g01 = pair_gradient(Vec2::ZERO, R, 0, 1);
        let g10 = pair_gradient(Vec2::ZERO, R, 1, 0);
        assert!((g01.norm() - R).abs() < 1e-15);
        assert_eq!(g01, -g10);
        assert_eq!(g01, pair_gradient(Vec2::ZERO, R, 0, 1));
        assert_ne!(coincident_direction(0, 1), coincident_direction(0, 2));
    }

    #[test]
    fn individual_examples() {
        let sq = Polygon::unit_square();
        let grid = grid3();
        for i in 0..9 {
            assert!(individual_potential(i, &grid, &sq, &params()).abs() < 1e-12);
        }
        let lone = SwarmState::at_rest(&[Vec2::new(1.5, 0.5)]);
        assert!((individual_potential(0, &lone, &sq, &params()) - 4.0 / 9.0).abs() < 1e-15);
        let pair = SwarmState::at_rest(&[Vec2::new(0.5, 0.5); 2]);
        for i in 0..2 {
            assert!((individual_potential(i, &pair, &sq, &params()) - 1.0 / 18.0).abs() < 1e-15);
        }
    }

    #[test]
    fn total_examples() {
        let sq = Polygon::unit_square();
        assert!(total_potential(&grid3(), &sq, &params()).abs() < 1e-12);
        let heap = SwarmState::at_rest(&[Vec2::new(0.5, 0.5); 9]);
        assert!((total_potential(&heap, &sq, &params()) - 4.0).abs() < 1e-12);
    }

    fn brute_total(swarm: &SwarmState, poly: &Polygon, r_d: f64) -> f64 {
        let mut total = 0.0;
        for (i, a) in swarm.agents.iter().enumerate() {
            // independent signed distance: min over edges, sign from crossing test
            let mut d = f64::INFINITY;
            for (p, q) in poly.edges() {
                let ab = q - p;
                let t = ((a.p - p).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
                d = d.min((a.p - (p + ab * t)).norm());
            }
            let sd = if poly.contains(a.p) { -d } else { d };
            let uh = if sd <= -r_d / 2.0 { 0.0 } else { 0.5 * (sd + r_d / 2.0).powi(2) };
            total += 2.0 * uh;
            for (j, b) in swarm.agents.iter().enumerate() {
                if i != j {
                    let dist = ((a.p.x - b.p.x).powi(2) + (a.p.y - b.p.y).powi(2)).sqrt();
                    if dist < r_d {
                        total += 0.5 * (dist - r_d).powi(2);
                    }
                }
            }
        }
        total
    }

    fn random_swarm(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> SwarmState {
        SwarmState {
            agents: (0..n)
                .map(|_| AgentState {
                    p: Vec2::new(rng.gen_range(-spread..1.0 + spread), rng.gen_range(-spread..1.0 + spread)),
                    v: Vec2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)),
                })
                .collect(),
        }
    }

    #[test]
    fn total_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let poly = Polygon::random(3, 7, 0.4, 1.0).unwrap().translated(Vec2::new(0.5, 0.5));
        for _ in 0..50 {
            let s = random_swarm(&mut rng, 9, 0.3);
            let t = total_potential(&s, &poly, &params());
            assert!((t - brute_total(&s, &poly, R)).abs() < 1e-12);
        }
    }

    #[test]
    fn potential_is_nonnegative_and_zero_only_at_subcover() {
        let sq = Polygon::unit_square();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let s = random_swarm(&mut rng, 9, 0.2);
            let phi = total_potential(&s, &sq, &params());
            assert!(phi >= 0.0);
            assert_eq!(phi == 0.0, crate::env::is_subcover(&s, &sq, R));
        }
        let mut g = grid3();
        assert!(total_potential(&g, &sq, &params()) < 1e-12);
        assert!(crate::env::is_subcover(&g, &sq, R));
        g.agents[0].p.y += 0.2;
        assert!(total_potential(&g, &sq, &params()) > 0.0);
    }

    // central differences of the energy whose gradient the controller descends
    fn fd_energy_grad(swarm: &SwarmState, poly: &Polygon, i: usize, h: f64) -> Vec2 {
        let energy = |s: &SwarmState| {
            let uh = agent_domain_potential(poly.signed_distance(s.agents[i].p), R);
            let ui: f64 = (0..s.len())
                .filter(|&j| j != i)
                .map(|j| pair_potential(s.agents[i].p.distance(s.agents[j].p), R))
                .sum();
            uh + ui
        };
        let mut out = [0.0; 2];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut plus = swarm.clone();
            let mut minus = swarm.clone();
            if k == 0 {
                plus.agents[i].p.x += h;
                minus.agents[i].p.x -= h;
            } else {
                plus.agents[i].p.y += h;
                minus.agents[i].p.y -= h;
            }
            *slot = (energy(&plus) - energy(&minus)) / (2.0 * h);
        }
        Vec2::new(out[0], out[1])
    }

    fn near_kink(swarm: &SwarmState, poly: &Polygon, i: usize) -> bool {
        let proj = poly.project_to_boundary(swarm.agents[i].p);
        if (proj.signed_distance() + R / 2.0).abs() < 1e-4 || proj.distance < 1e-4 {
            return true;
        }
        // medial axis: two edges almost equally close
        let mut ds: Vec<f64> = poly
            .edges()
            .map(|(a, b)| {
                (swarm.agents[i].p - crate::geometry::closest_point_on_segment(swarm.agents[i].p, a, b)).norm()
            })
            .collect();
        ds.sort_by(f64::total_cmp);
        if ds[1] - ds[0] < 1e-4 {
            return true;
        }
        (0..swarm.len()).any(|j| {
            j != i && {
                let d = swarm.agents[i].p.distance(swarm.agents[j].p);
                (d - R).abs() < 1e-4 || d < 1e-4
            }
        })
    }

    #[test]
    fn controller_matches_finite_differences() {
        let sq = Polygon::unit_square();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 100 {
            let s = random_swarm(&mut rng, 6, 0.4);
            let acc = classical_control_unclamped(&s, &sq, &params());
            for i in 0..s.len() {
                if near_kink(&s, &sq, i) {
                    continue;
                }
                let fd = fd_energy_grad(&s, &sq, i, 1e-6);
                let expected = -fd - s.agents[i].v * 1.0;
                assert!(rel_err(acc[i].x, expected.x) <= 1e-5, "{} vs {}", acc[i], expected);
                assert!(rel_err(acc[i].y, expected.y) <= 1e-5, "{} vs {}", acc[i], expected);
                checked += 1;
            }
        }
    }

    #[test]
    fn controller_examples() {
        let sq = Polygon::unit_square();
        let acc = classical_control(&grid3(), &sq, &params(), 1.0);
        assert!(acc.iter().all(|a| a.norm() < 1e-12));
        let lone = SwarmState::at_rest(&[Vec2::new(1.5, 0.5)]);
        let acc = classical_control(&lone, &sq, &params(), 10.0);
        assert!((acc[0] - Vec2::new(-2.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pair_gradient_antisymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let d = Vec2::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4));
            assert_eq!(pair_gradient(d, R, 2, 5), -pair_gradient(-d, R, 5, 2));
        }
    }

    #[test]
    fn controller_descends_energy() {
        let sq = Polygon::unit_square();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = DynamicsConfig { v_max: 100.0, a_max: 100.0, dt: 1e-3 };
        for _ in 0..100 {
            let mut s = random_swarm(&mut rng, 5, 0.3);
            for a in &mut s.agents {
                a.v = Vec2::ZERO;
            }
            let before = total_potential(&s, &sq, &params());
            if before == 0.0 {
                continue;
            }
            let acc = classical_control(&s, &sq, &params(), 100.0);
            let next = integrate_step(&s, &acc, &cfg).unwrap();
            assert!(total_potential(&next, &sq, &params()) < before);
        }
    }
}
