// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Clifford randomized benchmarking of one and two qubits.

use m2cs_qubit::clifford::mean_cz_per_clifford;
use m2cs_qubit::rb::{fit_rb, rb_experiment, RbPoint};
use m2cs_qubit::QubitParams;
use m2cs_signal::mix_seed;

use super::{Benchmark, Ctx};
use crate::config::Key;
use crate::error::{experiment, CliError};
use crate::report::{Check, Report, Table};

/// Lengths reach about two decay constants; shorter sweeps leave the
/// fitted decay poorly constrained at these sequence counts.
const LENGTHS_1Q: &[usize] = &[1, 100, 200, 400, 700, 1000, 1500, 2000, 3000, 4000];
const LENGTHS_2Q: &[usize] = &[1, 20, 50, 100, 150, 200, 300, 400, 500, 600];

pub const RB1: Benchmark = Benchmark {
    name: "rb1",
    about: "single-qubit Clifford randomized benchmarking",
    schema: &[Key::int("sequences", "300", 10, 100_000, "random sequences per length")],
    remote: false,
    run: run_1q,
};

pub const RB2: Benchmark = Benchmark {
    name: "rb2",
    about: "two-qubit Clifford randomized benchmarking, referred to one CZ",
    schema: &[Key::int(
        "sequences",
        "1000",
        10,
        100_000,
        "random sequences per length",
    )],
    remote: false,
    run: run_2q,
};

fn table(points: &[RbPoint], fit: impl Fn(f64) -> f64) -> Table {
    let mut t = Table::new(&["m", "survival", "sequences", "fit"]);
    for p in points {
        t.push(vec![p.m as f64, p.survival, p.sequences as f64, fit(p.m as f64)]);
    }
    t
}

fn run_1q(ctx: &Ctx) -> Result<Report, CliError> {
    ctx.require_local("rb1")?;
    let err = QubitParams::reference().gate_error_1q;
    let points =
        rb_experiment(1, LENGTHS_1Q, ctx.cfg.usize("sequences"), err, mix_seed(ctx.seed, 1)).map_err(experiment)?;
    let fit = fit_rb(1, &points).map_err(experiment)?;
    let mut rep = ctx.report("rb1");
    rep.fit("decay", fit.decay)
        .fit("clifford_fidelity", fit.clifford_fidelity);
    rep.check(Check::near("clifford_fidelity", fit.clifford_fidelity, 0.9996, 0.0002));
    rep.set_table(table(&points, |m| fit.fit.eval(m)));
    Ok(rep)
}

fn run_2q(ctx: &Ctx) -> Result<Report, CliError> {
    ctx.require_local("rb2")?;
    let err = QubitParams::reference().gate_error_2q;
    let points =
        rb_experiment(2, LENGTHS_2Q, ctx.cfg.usize("sequences"), err, mix_seed(ctx.seed, 2)).map_err(experiment)?;
    let fit = fit_rb(2, &points).map_err(experiment)?;
    let cz_per_clifford = mean_cz_per_clifford();
    let cz_fidelity = 1.0 - (1.0 - fit.clifford_fidelity) / cz_per_clifford;
    let mut rep = ctx.report("rb2");
    rep.fit("decay", fit.decay)
        .fit("clifford_fidelity", fit.clifford_fidelity)
        .fit("cz_per_clifford", cz_per_clifford)
        .fit("cz_fidelity", cz_fidelity);
    rep.check(Check::near("cz_fidelity", cz_fidelity, 0.9973, 0.0005));
    rep.set_table(table(&points, |m| fit.fit.eval(m)));
    Ok(rep)
}
