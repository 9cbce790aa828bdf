use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use qbdr_ffi::*;

const MM1: &str = r#"{
  "n": 1,
  "C": 3,
  "blocks": {"A_minus1": [[2.0]], "A0": [[-3.0]], "A1": [[1.0]], "B0": [[-1.0]], "C0": [[-2.0]]},
  "reward": {"g": [[0.0], [0.0], [0.0], [1.0]]}
}"#;

fn load(json: &str) -> (QbdrStatus, *mut QbdrModel) {
    let text = CString::new(json).unwrap();
    let mut model = ptr::null_mut();
    let st = unsafe { qbdr_model_from_json(text.as_ptr(), &mut model) };
    (st, model)
}

fn last_error() -> String {
    let p = qbdr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn birth_death_round_trip() {
    let (st, model) = load(MM1);
    assert_eq!(st, QbdrStatus::Ok);
    let (mut n, mut c) = (0usize, 0usize);
    assert_eq!(unsafe { qbdr_model_dims(model, &mut n, &mut c) }, QbdrStatus::Ok);
    assert_eq!((n, c), (1, 3));

    let mut pi = [0.0; 4];
    assert_eq!(
        unsafe { qbdr_stationary(model, pi.as_mut_ptr(), pi.len()) },
        QbdrStatus::Ok
    );
    assert!(qbdr_last_error().is_null());
    let expect = [8.0 / 15.0, 4.0 / 15.0, 2.0 / 15.0, 1.0 / 15.0];
    for (a, b) in pi.iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }

    let mut d = [0.0; 16];
    assert_eq!(
        unsafe { qbdr_deviation(model, d.as_mut_ptr(), d.len()) },
        QbdrStatus::Ok
    );
    for i in 0..4 {
        let row: f64 = d[i * 4..i * 4 + 4].iter().sum();
        assert!(row.abs() < 1e-10);
    }
    let mut blk = [0.0; 1];
    assert_eq!(
        unsafe { qbdr_deviation_block(model, 2, 3, blk.as_mut_ptr(), 1) },
        QbdrStatus::Ok
    );
    assert!((blk[0] - d[2 * 4 + 3]).abs() < 1e-10);

    let mut m = [0.0; 4];
    assert_eq!(unsafe { qbdr_passage(model, 0, 0, m.as_mut_ptr(), 4) }, QbdrStatus::Ok);
    assert_eq!(m[0], 0.0);
    assert!((m[1] - 0.875).abs() < 1e-12 && m[3] > m[2] && m[2] > m[1]);

    let mut r = [0.0; 4];
    assert_eq!(
        unsafe { qbdr_reward_time(model, 0.0, r.as_mut_ptr(), 4) },
        QbdrStatus::Ok
    );
    assert!(r.iter().all(|&x| x.abs() < 1e-12));
    assert_eq!(
        unsafe { qbdr_reward_time(model, 50.0, r.as_mut_ptr(), 4) },
        QbdrStatus::Ok
    );
    assert!((r[0] - 50.0 / 15.0).abs() < 1.0);

    unsafe { qbdr_model_free(model) };
}

#[test]
fn failures_are_reported() {
    let (st, model) = load("{not json");
    assert_eq!(st, QbdrStatus::Parse);
    assert!(model.is_null());
    assert!(last_error().contains("line"));

    let bad = MM1.replace("[[-3.0]]", "[[-4.0]]");
    assert_eq!(load(&bad).0, QbdrStatus::Parse);

    let (_, model) = load(MM1);
    let mut small = [0.0; 3];
    assert_eq!(
        unsafe { qbdr_stationary(model, small.as_mut_ptr(), small.len()) },
        QbdrStatus::BufferTooSmall
    );
    assert_eq!(
        unsafe { qbdr_stationary(model, ptr::null_mut(), 4) },
        QbdrStatus::NullPointer
    );
    assert_eq!(
        unsafe { qbdr_stationary(ptr::null(), small.as_mut_ptr(), 3) },
        QbdrStatus::NullPointer
    );
    let mut one = [0.0; 1];
    assert_eq!(
        unsafe { qbdr_deviation_block(model, 9, 0, one.as_mut_ptr(), 1) },
        QbdrStatus::Parse
    );
    assert_eq!(
        unsafe { qbdr_reward_time(model, -1.0, one.as_mut_ptr(), 4) },
        QbdrStatus::Parse
    );
    assert!(last_error().contains("t must"));
    unsafe { qbdr_model_free(model) };
    unsafe { qbdr_model_free(ptr::null_mut()) };
}

#[test]
fn missing_reward_is_a_precondition_failure() {
    let json = MM1.replace(
        r#",
  "reward": {"g": [[0.0], [0.0], [0.0], [1.0]]}"#,
        "",
    );
    let (st, model) = load(&json);
    assert_eq!(st, QbdrStatus::Ok);
    let mut r = [0.0; 4];
    assert_eq!(
        unsafe { qbdr_reward_time(model, 1.0, r.as_mut_ptr(), 4) },
        QbdrStatus::Precondition
    );
    unsafe { qbdr_model_free(model) };
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/qbdr.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "qbdr_model_from_json",
        "qbdr_model_free",
        "qbdr_model_dims",
        "qbdr_stationary",
        "qbdr_deviation",
        "qbdr_deviation_block",
        "qbdr_passage",
        "qbdr_reward_time",
        "qbdr_last_error",
        "QBDR_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let probe = std::env::temp_dir().join(format!("qbdr_header_probe_{}.c", std::process::id()));
    std::fs::write(
        &probe,
        "#include \"qbdr.h\"\nint main(void) { QbdrModel *m = 0; QbdrStatus s = qbdr_model_from_json(\"{}\", &m); qbdr_model_free(m); return (int)s; }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&probe)
        .output();
    let _ = std::fs::remove_file(&probe);
    match out {
        Ok(o) => assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr)),
        Err(e) => eprintln!("no C compiler available, syntax check skipped: {e}"),
    }
}
