//! CSV emission for scores, sweep rows and report summaries.

use std::io::Write;

use super::{EvalReport, Result, ScoreRecord, SweepRow};

pub const SCORES_HEADER: [&str; 5] = [
    "test_utterance_id",
    "model_speaker_id",
    "is_target",
    "raw_score",
    "normalized_score",
];

pub const SWEEP_HEADER: [&str; 5] = [
    "subband_index",
    "span_lo_hz",
    "span_hi_hz",
    "eer_percent",
    "id_percent",
];

pub const REPORT_HEADER: [&str; 9] = [
    "population",
    "system",
    "band_mode",
    "k",
    "eer_percent",
    "id_percent",
    "n_trials",
    "n_tests",
    "seed",
];

fn rate(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_scores_csv<W: Write>(w: W, records: &[ScoreRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SCORES_HEADER)?;
    for r in records {
        out.write_record([
            r.trial.test_utterance_id.as_str(),
            r.trial.model_speaker_id.as_str(),
            if r.trial.is_target { "1" } else { "0" },
            &r.raw_score.to_string(),
            &r.normalized_score.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for r in rows {
        out.write_record([
            r.subband_index.to_string(),
            format!("{:.0}", r.span_lo_hz),
            format!("{:.0}", r.span_hi_hz),
            rate(r.eer_percent),
            rate(r.id_percent),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_reports_csv<W: Write>(w: W, reports: &[EvalReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REPORT_HEADER)?;
    for r in reports {
        out.write_record([
            r.population.clone(),
            r.system.to_string(),
            r.band_mode.to_string(),
            r.k.to_string(),
            rate(r.eer_percent),
            rate(r.id_accuracy_percent),
            r.n_trials.to_string(),
            r.n_tests.to_string(),
            r.seed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Trial;

    #[test]
    fn scores_layout() {
        let rec = ScoreRecord {
            trial: Trial {
                test_utterance_id: "u1".into(),
                model_speaker_id: "s1".into(),
                is_target: true,
            },
            raw_score: -1.5,
            normalized_score: 0.0,
        };
        let mut buf = Vec::new();
        write_scores_csv(&mut buf, &[rec]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "test_utterance_id,model_speaker_id,is_target,raw_score,normalized_score\nu1,s1,1,-1.5,0\n"
        );
    }

    #[test]
    fn sweep_layout() {
        let row = SweepRow {
            subband_index: 15,
            span_lo_hz: 2062.0,
            span_hi_hz: 3812.0,
            eer_percent: 12.5,
            id_percent: 80.0,
        };
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &[row]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "subband_index,span_lo_hz,span_hi_hz,eer_percent,id_percent\n15,2062,3812,12.500000,80.000000\n"
        );
    }
}
