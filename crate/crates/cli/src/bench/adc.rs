// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Converter benchmarks: DAC spurious-free dynamic range and ADC effective
//! bits, both measured on coherent single tones.

use m2cs_awg::{PlaylistEntry, HALT};
use m2cs_backplane::chassis::{layout, standard};
use m2cs_backplane::dut::InputRoute;
use m2cs_backplane::TriggerType;
use m2cs_daq::DemodChannelConfig;
use m2cs_mixer::RfTone;
use m2cs_protocol::payload::SetDemod;
use m2cs_qubit::QubitParams;
use m2cs_signal::{analyze_tone, coherent_frequency, sine, AnalyzeOptions, SampleFormat, SpectrumReport, WindowKind};

use super::{dac_all, is_default, period_ns, table, Benchmark, Ctx};
use crate::config::Key;
use crate::error::{experiment, CliError};
use crate::report::{Check, Report, Table};
use crate::session::Session;

const DAC_FS_HZ: f64 = 2e9;
const ADC_FS_HZ: f64 = 1e9;

/// Quantization-limited SFDR of the default record, from an independent
/// FFT of the same quantized tone.
const SFDR_ORACLE_DBC: f64 = -114.092;
const SFDR_ORACLE_TOL_DB: f64 = 0.5;

pub const SFDR: Benchmark = Benchmark {
    name: "sfdr",
    about: "DAC spurious-free dynamic range of a coherent tone loaded into wave memory",
    schema: &[
        Key::positive(
            "freq-mhz",
            "100",
            1000.0,
            "tone frequency, below the 1 GHz Nyquist limit",
        ),
        Key::positive("amplitude-v", "1.0", 1.0, "tone amplitude"),
        Key::int("samples", "65536", 1024, 262_144, "record length, a power of two"),
        Key::choice("window", "rect", &["rect", "hann"], "analysis window"),
    ],
    remote: false,
    run: run_sfdr,
};

pub const ENOB: Benchmark = Benchmark {
    name: "enob",
    about: "ADC SNR and effective bits from a raw capture of a coherent IF tone",
    schema: &[
        Key::positive("freq-mhz", "30", 500.0, "IF tone frequency"),
        Key::positive("amplitude-v", "0.48828125", 0.5, "tone amplitude at the ADC"),
        Key::float("noise-mv", "1.5", 0.0, 100.0, "input-referred ADC noise, rms"),
        Key::positive(
            "noiseless-amplitude-v",
            "0.49609375",
            0.5,
            "tone amplitude for the noiseless formula check",
        ),
        Key::int("samples", "4096", 1024, 4096, "record length, a power of two"),
    ],
    remote: false,
    run: run_enob,
};

fn window_kind(s: &str) -> WindowKind {
    if s == "hann" {
        WindowKind::Hann
    } else {
        WindowKind::Rect
    }
}

fn spectrum_table(r: &SpectrumReport) -> Table {
    let mut t = Table::new(&["bin", "freq_hz", "power_dbfs"]);
    for (k, p) in r.power_dbfs.iter().enumerate() {
        t.push(vec![k as f64, k as f64 * r.bin_hz, *p]);
    }
    t
}

fn fit_spectrum(rep: &mut Report, prefix: &str, r: &SpectrumReport) {
    rep.fit(&format!("{prefix}fundamental_hz"), r.fundamental_hz)
        .fit(&format!("{prefix}fundamental_dbfs"), r.fundamental_dbfs)
        .fit(&format!("{prefix}sfdr_dbc"), r.sfdr_dbc)
        .fit(&format!("{prefix}snr_dbc"), r.snr_dbc)
        .fit(&format!("{prefix}thd_dbc"), r.thd_dbc)
        .fit(&format!("{prefix}enob"), r.enob);
}

fn run_sfdr(ctx: &Ctx) -> Result<Report, CliError> {
    let c = &ctx.cfg;
    let n = c.usize("samples");
    c.check(n.is_power_of_two(), "samples", "must be a power of two")?;
    let f_req = c.f64("freq-mhz") * 1e6;
    c.check(
        f_req < DAC_FS_HZ / 2.0,
        "freq-mhz",
        "must lie below the 1000 MHz Nyquist limit",
    )?;
    let f = coherent_frequency(f_req, DAC_FS_HZ, n);
    let codes = dac_all(&sine(n, DAC_FS_HZ, f, c.f64("amplitude-v"), 0.0));

    let mut s = ctx.session("sfdr", |id, seed| standard(id, seed, QubitParams::reference()))?;
    let slot = layout::XY_AWG;
    s.client.write_wave(slot, 0, 1, &codes)?;
    let stored: Vec<f64> = {
        let hw = s.hw()?;
        let seg = hw
            .bay()
            .awg(slot)
            .and_then(|a| a.segment(0, 1))
            .ok_or_else(|| experiment("segment not stored"))?;
        seg.iter().map(|d| d.code() as f64).collect()
    };
    let opts = AnalyzeOptions {
        window: window_kind(c.str("window")),
        ..AnalyzeOptions::for_format(SampleFormat::Dac)
    };
    let r = analyze_tone(&stored, DAC_FS_HZ, f, &opts).map_err(experiment)?;

    let mut rep = ctx.report("sfdr");
    fit_spectrum(&mut rep, "", &r);
    rep.check(Check::at_most("sfdr_dbc", r.sfdr_dbc, -95.0));
    if is_default(c, SFDR.schema) {
        rep.check(Check::near(
            "sfdr_vs_quantization_oracle_dbc",
            r.sfdr_dbc,
            SFDR_ORACLE_DBC,
            SFDR_ORACLE_TOL_DB,
        ));
    }
    rep.set_table(spectrum_table(&r));
    Ok(rep)
}

/// Captures `n` raw samples of a tone routed to the scope DAQ's input 1.
fn capture(s: &mut Session, tone: RfTone, noise_v: f64, n: usize) -> Result<Vec<f64>, CliError> {
    let daq = layout::SCOPE_DAQ;
    {
        let mut hw = s.hw()?;
        hw.dut_mut().route(
            daq,
            1,
            InputRoute::Tones {
                tones: vec![tone],
                noise_rms_v: 0.0,
            },
        );
        hw.bay_mut()
            .daq_mut(daq)
            .ok_or_else(|| experiment("no scope DAQ"))?
            .set_noise_rms(noise_v);
    }
    s.client.start(1, period_ns(n as u64))?;
    let raw = s.client.read_raw_range(daq, 1, 0, n as u32)?;
    if raw.len() != n {
        return Err(experiment(format!("captured {} of {n} samples", raw.len())));
    }
    Ok(raw.iter().map(|p| p.0 as f64).collect())
}

fn run_enob(ctx: &Ctx) -> Result<Report, CliError> {
    let c = &ctx.cfg;
    let n = c.usize("samples");
    c.check(n.is_power_of_two(), "samples", "must be a power of two")?;
    let f = coherent_frequency(c.f64("freq-mhz") * 1e6, ADC_FS_HZ, n);
    let daq = layout::SCOPE_DAQ;

    let mut s = ctx.session("enob", |id, seed| standard(id, seed, QubitParams::reference()))?;
    let cfg = DemodChannelConfig {
        channel: 0,
        freq_hz: f,
        phase_millideg: 0,
        window: WindowKind::Rect,
        length_ns: n as u32,
        input: 1,
    };
    s.client.set_demod(daq, SetDemod::enable(cfg))?;
    s.client
        .write_trig_table(&table(daq, &[(TriggerType::Start, 0)], None))?;
    // The scope's other input is fed by this AWG; keep it idle.
    s.client
        .write_playlist(layout::BRANCH_AWG, &[PlaylistEntry::play(1, HALT)])?;

    let tone = |a: f64| RfTone {
        freq_hz: layout::READOUT_LO_HZ + f,
        amplitude_v: a,
        phase_rad: 0.3,
    };
    let opts = AnalyzeOptions::for_format(SampleFormat::ADC);
    let noisy = capture(&mut s, tone(c.f64("amplitude-v")), c.f64("noise-mv") * 1e-3, n)?;
    let r = analyze_tone(&noisy, ADC_FS_HZ, f, &opts).map_err(experiment)?;
    let clean = capture(&mut s, tone(c.f64("noiseless-amplitude-v")), 0.0, n)?;
    let r0 = analyze_tone(&clean, ADC_FS_HZ, f, &opts).map_err(experiment)?;

    let mut rep = ctx.report("enob");
    fit_spectrum(&mut rep, "", &r);
    fit_spectrum(&mut rep, "noiseless_", &r0);
    rep.check(Check::near("enob", r.enob, 7.2, 0.1))
        .check(Check::near("snr_dbc", r.snr_dbc, 45.8, 0.6))
        .check(Check::near("noiseless_snr_db", r0.snr_dbc, 6.02 * 8.0 + 1.76, 0.5));
    let mut t = spectrum_table(&r);
    t.columns.push("noiseless_power_dbfs".into());
    for (row, p) in t.rows.iter_mut().zip(&r0.power_dbfs) {
        row.push(*p);
    }
    rep.set_table(t);
    Ok(rep)
}
