//! Drivers behind the `go-check` and `recover` commands.

use super::config::{ExperimentConfig, PacketSide};
use super::sweep::{fmt_num, run_recovery, RecoveryRun, SweepContext};
use crate::dnmap::dn_distance;
use crate::error::Result;
use crate::go::{assemble_packet, BetaMode, GOParams, GoSetup, Side};
use crate::potentials::extend_pair;

pub const GO_HEADER: [&str; 9] = ["side", "sigma", "rho1", "rho2", "u1_l2", "u2_l2", "remainder_l2", "residual", "residual_predicted"];

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct GoCheckRow {
    pub side: PacketSide,
    pub sigma: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub u1_l2: f64,
    pub u2_l2: f64,
    pub remainder_l2: f64,
    pub residual: f64,
    pub residual_predicted: f64,
}

impl GoCheckRow {
    pub fn cells(&self) -> Vec<String> {
        let side = match self.side {
            PacketSide::Magnetic => "magnetic",
            PacketSide::Electric => "electric",
            PacketSide::Two => "two",
        };
        let mut v = vec![side.to_string()];
        v.extend([self.sigma, self.rho1, self.rho2, self.u1_l2, self.u2_l2, self.remainder_l2, self.residual, self.residual_predicted].map(fmt_num));
        v
    }
}

/// Packets for every configured `sigma` and side, between the base pair and
/// the pair perturbed at `recovery.amplitude`.
pub fn go_check(config: &ExperimentConfig) -> Result<Vec<GoCheckRow>> {
    let g = config.grid()?;
    let ctx = SweepContext::new_without_matrix(config)?;
    let p2 = ctx.pair(config.recovery.amplitude);
    let (e1, e2) = extend_pair(&g, &ctx.base, &p2, config.potentials.pad)?;
    let c = &config.go;
    let mut rows = Vec::new();
    for &sigma in &c.sigma {
        let setup = GoSetup::new(&g, &e1, &e2, GOParams::new(sigma, c.omega, c.tau, c.xi, c.delta))?;
        for &side in &c.sides {
            let s = match side {
                PacketSide::Magnetic => Side::One(BetaMode::Magnetic),
                PacketSide::Electric => Side::One(BetaMode::Electric),
                PacketSide::Two => Side::Two,
            };
            let k = assemble_packet(&setup, s)?;
            rows.push(GoCheckRow {
                side,
                sigma,
                rho1: k.residual.rho1,
                rho2: k.residual.rho2,
                u1_l2: g.l2_norm_c(&k.u1),
                u2_l2: g.l2_norm_c(&k.u2),
                remainder_l2: g.l2_norm_c(&k.remainder),
                residual: k.residual.without_remainder,
                residual_predicted: k.residual.predicted,
            });
        }
    }
    Ok(rows)
}

/// DN distance and recovery for the pair perturbed at `recovery.amplitude`.
pub fn recover_once(config: &ExperimentConfig) -> Result<(f64, RecoveryRun)> {
    let ctx = SweepContext::new(config)?;
    ctx.check_family()?;
    let p2 = ctx.pair(config.recovery.amplitude);
    let eps = dn_distance(&ctx.base_matrix, &ctx.matrix_of(&p2)?)?;
    let run = run_recovery(config, &ctx.grid, &ctx.base, &p2, eps)?;
    Ok((eps, run))
}
