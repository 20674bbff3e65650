use std::path::PathBuf;
use std::time::Instant;

use mechkit::io::emit::{emit_json, fmt_sig17, parse_json};
use mechkit::io::log::{parse_measurements, LogError};
use mechkit::io::{emit_csv, load_model, parse_csv, parse_log, parse_mechanism, serialize_log, serialize_mechanism, ParseErrorKind, ResultTable};
use mechkit::mechanisms::{self, ClosureOracle, CrankOracle};
use mechkit::{fixtures, Error};
use nalgebra::DVector;
use proptest::prelude::*;

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

const ONE_LINK: &str = "format: 1\nname: lonely\n\nlink body {\n  mass: 1\n  com: 0 0 0\n  inertia: 1 1 1 0 0 0\n}\n";

#[test]
fn single_link_has_no_dofs() {
    let m = load_model(ONE_LINK).unwrap();
    assert_eq!((m.n, m.m), (0, 0));
    assert_eq!(m.links.len(), 1);
}

#[test]
fn crank_limits_survive_the_file() {
    let text = std::fs::read_to_string(fixture_dir().join("crank.mech")).unwrap();
    let m = load_model(&text).unwrap();
    let slider = m.dof_index("slider").unwrap();
    assert_eq!(m.dof_limits(slider), (-0.02, 0.02));
    assert_eq!((m.n, m.m), (3, 2));
}

#[test]
fn loop_to_missing_link_names_it() {
    let text = serialize_mechanism(&mechanisms::crank()).replace("u_link: rod", "u_link: conrod");
    let e = parse_mechanism(&text).unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::UnknownReference);
    assert!(e.message.contains("conrod"), "{}", e.message);
    let line = text.lines().position(|l| l.contains("u_link: conrod")).unwrap() + 1;
    assert_eq!(e.line, line);
}

#[test]
fn documents_round_trip() {
    for (name, doc) in mechanisms::catalog() {
        let text = serialize_mechanism(&doc);
        let back = parse_mechanism(&text).unwrap();
        assert_eq!(back, doc, "{name}");
        assert_eq!(serialize_mechanism(&back), text, "{name}");
    }
}

#[test]
fn missing_format_is_rejected() {
    let e = parse_mechanism(ONE_LINK.trim_start_matches("format: 1\n")).unwrap_err();
    assert_eq!(e.code(), "syntax_error");
    let e = parse_mechanism(&ONE_LINK.replace("format: 1", "format: 2")).unwrap_err();
    assert_eq!(e.code(), "syntax_error");
}

#[test]
fn malformed_corpus_reports_code_and_location() {
    let dir = fixture_dir().join("malformed");
    let mut paths: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    assert!(paths.len() >= 10);
    for p in paths {
        let text = std::fs::read_to_string(&p).unwrap();
        let expect = text.lines().next().and_then(|l| l.strip_prefix("# expect: ")).expect("expectation header");
        let (code, at) = expect.split_once(' ').unwrap();
        let (line, col) = at.split_once(':').unwrap();
        let e = parse_mechanism(&text).unwrap_err();
        assert_eq!(e.code(), code, "{}: {e}", p.display());
        assert_eq!((e.line, e.column), (line.parse().unwrap(), col.parse().unwrap()), "{}: {e}", p.display());
        // the library error carries the same stable code
        assert_eq!(Error::from(e).code(), code);
    }
}

#[test]
fn large_document_parses_quickly() {
    let text = serialize_mechanism(&mechanisms::synth76());
    let _ = load_model(&text).unwrap();
    let mut best = f64::INFINITY;
    for _ in 0..5 {
        let t = Instant::now();
        let m = load_model(&text).unwrap();
        best = best.min(t.elapsed().as_secs_f64());
        assert_eq!(m.n, 76);
    }
    assert!(best <= 0.05, "{best} s");
}

#[test]
fn empty_log_body() {
    let log = parse_log("# format: 1\ntime_s,pos_slider,vel_slider\n").unwrap();
    assert!(log.samples.is_empty());
    assert_eq!(log.names, vec!["slider".to_string()]);
}

#[test]
fn shuffled_timestamps_are_rejected() {
    let text = "# format: 1\ntime_s,pos_slider,vel_slider\n0.0,0,0\n0.002,0,0\n0.001,0,0\n";
    match parse_log(text) {
        Err(e @ LogError::NonMonotoneTime { .. }) => assert_eq!(e.code(), "non_monotone_time"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn log_errors_carry_codes() {
    let cases = [
        ("time_s,pos_a\n0,1\n", "column_mismatch"),
        ("time_s,pos_a,vel_a\n0,1\n", "column_mismatch"),
        ("time_s,pos_a,vel_a\n0,x,1\n", "bad_number"),
        ("# only a comment\n", "missing_header"),
    ];
    for (text, code) in cases {
        assert_eq!(parse_log(text).unwrap_err().code(), code, "{text:?}");
    }
    assert_eq!(parse_measurements("joint,value\ncrank,abc\n").unwrap_err().code(), "bad_number");
    assert_eq!(parse_measurements("crank,1\n").unwrap_err().code(), "column_mismatch");
}

#[test]
fn sine_log_round_trips_exactly() {
    let text = std::fs::read_to_string(fixture_dir().join("sin1khz.csv")).unwrap();
    let log = parse_log(&text).unwrap();
    assert_eq!(log.samples.len(), 10_001);
    assert_eq!(serialize_log(&log), text);
    let crank = mechanisms::model_of(&mechanisms::crank());
    assert_eq!(log.bind(&crank).unwrap(), vec![0]);
    let diff = mechanisms::model_of(&mechanisms::diff());
    assert!(log.bind(&diff).is_err());
}

#[test]
fn header_only_csv() {
    let t = ResultTable::new(vec!["a".into(), "b".into()]);
    let s = emit_csv(&t);
    assert_eq!(s, "# format: 1\na,b\n");
    assert_eq!(parse_csv(&s).unwrap(), t);
}

#[test]
fn chi_keeps_declared_order() {
    let s = emit_json("inertia_ratio", &vec![3.6, 4.1, 4.6]);
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["format"], 1);
    assert_eq!(v["data"], serde_json::json!([3.6, 4.1, 4.6]));
    let back = parse_json::<Vec<f64>>(&s).unwrap();
    assert_eq!(back.data, vec![3.6, 4.1, 4.6]);
}

#[test]
fn seventeen_digits() {
    assert_eq!(fmt_sig17(0.1), "1.0000000000000001e-1");
    assert_eq!(fmt_sig17(f64::NAN), "NaN");
    for x in [0.1 + 0.2, -1e-300, 5e-324, f64::MAX, 1.0 / 3.0] {
        assert_eq!(fmt_sig17(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn result_tables_round_trip(rows in prop::collection::vec(prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 3), 0..20)) {
        let mut t = ResultTable::new(vec!["x".into(), "y".into(), "z".into()]);
        for r in rows {
            t.push(r);
        }
        let back = parse_csv(&emit_csv(&t)).unwrap();
        prop_assert_eq!(&back.columns, &t.columns);
        prop_assert_eq!(back.rows.len(), t.rows.len());
        for (a, b) in back.rows.iter().zip(&t.rows) {
            for (x, y) in a.iter().zip(b) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        let json: ResultTable = parse_json(&emit_json("table", &t)).unwrap().data;
        prop_assert_eq!(json, t);
    }
}

#[test]
fn shipped_fixtures_match_generators() {
    for (name, text) in fixtures::files().unwrap() {
        let on_disk = std::fs::read_to_string(fixture_dir().join(&name)).unwrap_or_else(|_| panic!("missing fixture {name}"));
        assert!(on_disk == text, "{name} is stale; run `mechkit fixtures`");
    }
}

#[test]
fn oracle_table_rows_match_the_oracle() {
    let text = std::fs::read_to_string(fixture_dir().join("crank_oracle.csv")).unwrap();
    let t = parse_csv(&text).unwrap();
    assert_eq!(t.columns[0], "qa_slider");
    assert_eq!(t.rows.len(), 21);
    let oracle = CrankOracle::new(mechanisms::model_of(&mechanisms::crank()));
    let m = oracle.model().clone();
    let d = m.dof_index("crank").unwrap();
    let col = t.columns.iter().position(|c| c == "theta_crank").unwrap();
    for r in &t.rows {
        let theta = oracle.configuration(&DVector::from_element(1, r[0])).unwrap();
        assert_eq!(theta[d], r[col]);
    }
}
