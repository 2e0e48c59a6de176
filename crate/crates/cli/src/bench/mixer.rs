// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! IQ mixer leakage calibration over randomized impairments.
//!
//! Each draw is installed as the XY AWG's up-converter, calibrated against
//! the leakage spectrum, and the correction is written back over the wire
//! before the residual leakage is measured through the stored correction.

use m2cs_awg::{Personality, RfStage};
use m2cs_backplane::chassis::{layout, standard};
use m2cs_mixer::{calibrate, leakage_of, LeakageTargets, MixerError, MixerImpairments, STAGE_BUDGET};
use m2cs_qubit::QubitParams;
use m2cs_signal::mix_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Benchmark, Ctx};
use crate::config::Key;
use crate::error::{experiment, CliError};
use crate::report::{Check, Table};

pub const MIXER_CAL: Benchmark = Benchmark {
    name: "mixer-cal",
    about: "LO and image leakage after calibrating randomized IQ mixer impairments",
    schema: &[
        Key::int("draws", "50", 1, 1000, "number of impairment draws"),
        Key::positive("dc-max-mv", "20", 100.0, "largest DC offset per arm"),
        Key::positive("gain-spread", "0.08", 0.3, "Q/I gain ratio drawn from 1 ± spread"),
        Key::positive("skew-max-rad", "0.08", 0.7, "largest quadrature skew"),
        Key::positive("lo-min-ghz", "4", 10.0, "lowest LO"),
        Key::positive("lo-max-ghz", "8", 10.0, "highest LO"),
        Key::positive("sideband-mhz", "50", 500.0, "sideband of the calibration tone"),
    ],
    remote: false,
    run,
};

/// LO draws are snapped to this grid so every record is coherent.
const LO_GRID_HZ: f64 = 10e6;

fn run(ctx: &Ctx) -> Result<crate::report::Report, CliError> {
    let c = &ctx.cfg;
    let (lo_min, lo_max) = (c.f64("lo-min-ghz") * 1e9, c.f64("lo-max-ghz") * 1e9);
    c.check(lo_max >= lo_min, "lo-max-ghz", "must not be below lo-min-ghz")?;
    let sb = c.f64("sideband-mhz") * 1e6;
    let targets = LeakageTargets::default();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(ctx.seed, 0x4d49_5845));
    let slot = layout::XY_AWG;

    let mut s = ctx.session("mixer-cal", |id, seed| standard(id, seed, QubitParams::reference()))?;
    let mut t = Table::new(&[
        "draw",
        "lo_hz",
        "dc_i",
        "dc_q",
        "gain_ratio",
        "skew_rad",
        "lo_before_dbm",
        "image_before_dbm",
        "lo_after_dbm",
        "image_after_dbm",
        "evals_lo",
        "evals_image",
    ]);
    let (mut worst_lo, mut worst_img, mut worst_evals, mut failures) = (f64::MIN, f64::MIN, 0usize, 0usize);
    for draw in 0..c.usize("draws") {
        let dc = c.f64("dc-max-mv") * 1e-3;
        let lo_steps = ((lo_max - lo_min) / LO_GRID_HZ).floor() as u64;
        let imp = MixerImpairments {
            dc_i: rng.gen_range(-dc..=dc),
            dc_q: rng.gen_range(-dc..=dc),
            gain_ratio: 1.0 + rng.gen_range(-1.0..=1.0) * c.f64("gain-spread"),
            phase_skew: rng.gen_range(-1.0..=1.0) * c.f64("skew-max-rad"),
            lo_hz: (lo_min / LO_GRID_HZ).ceil() * LO_GRID_HZ + rng.gen_range(0..=lo_steps) as f64 * LO_GRID_HZ,
        };
        {
            let mut hw = s.hw()?;
            let awg = hw.bay_mut().awg_mut(slot).ok_or_else(|| experiment("no XY AWG"))?;
            let mut stage = RfStage::ideal(imp.lo_hz);
            stage.impairments[0] = imp;
            awg.set_personality(Personality::Rf(stage));
        }
        let cal = match calibrate(&imp, sb, targets) {
            Ok(cal) => cal,
            Err(MixerError::DidNotConverge { best }) => {
                failures += 1;
                *best
            }
            Err(e) => return Err(experiment(e)),
        };
        s.client.set_mixer_correction(slot, 0, cal.correction)?;
        let stored = {
            let hw = s.hw()?;
            match hw.bay().awg(slot).map(|a| a.personality()) {
                Some(Personality::Rf(st)) => st.correction[0],
                _ => return Err(experiment("XY AWG lost its RF stage")),
            }
        };
        let after = leakage_of(&imp, &stored, sb).map_err(experiment)?;
        worst_lo = worst_lo.max(after.p_lo_dbm);
        worst_img = worst_img.max(after.p_image_dbm);
        worst_evals = worst_evals.max(cal.evaluations[0]).max(cal.evaluations[1]);
        t.push(vec![
            draw as f64,
            imp.lo_hz,
            imp.dc_i,
            imp.dc_q,
            imp.gain_ratio,
            imp.phase_skew,
            cal.before.p_lo_dbm,
            cal.before.p_image_dbm,
            after.p_lo_dbm,
            after.p_image_dbm,
            cal.evaluations[0] as f64,
            cal.evaluations[1] as f64,
        ]);
    }

    let mut rep = ctx.report("mixer-cal");
    rep.fit("worst_lo_dbm", worst_lo)
        .fit("worst_image_dbm", worst_img)
        .fit("worst_stage_evaluations", worst_evals as f64);
    rep.check(Check::at_most("worst_lo_dbm", worst_lo, targets.lo_dbm))
        .check(Check::at_most("worst_image_dbm", worst_img, targets.image_dbm))
        .check(Check::at_most(
            "worst_stage_evaluations",
            worst_evals as f64,
            STAGE_BUDGET as f64,
        ))
        .check(Check::at_most("unconverged_draws", failures as f64, 0.0));
    rep.set_table(t);
    Ok(rep)
}
