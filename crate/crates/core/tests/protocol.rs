use planecast::geometry::TechniqueMode;
use planecast::math::{Quat, Vec3};
use planecast::protocol::{decode, encode, DecodeError, TouchPhase, WireMessage};
use planecast::session::{replay, LogRecord, Session, SessionConfig};
use planecast::task::Condition;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, any::<f64>().prop_filter("finite", |f| f.is_finite())]
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (finite(), finite(), finite()).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn unit_quat() -> impl Strategy<Value = [f64; 4]> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter_map("zero", |(w, x, y, z)| Quat::from_components(w, x, y, z).normalized())
        .prop_map(|q| q.to_array())
}

fn message() -> impl Strategy<Value = WireMessage> {
    let technique = prop_oneof![Just(TechniqueMode::Pivot), Just(TechniqueMode::Free)];
    let condition = prop_oneof![Just(Condition::Speed), Just(Condition::Accuracy)];
    let phase = prop_oneof![Just(TouchPhase::Down), Just(TouchPhase::Move), Just(TouchPhase::Up)];
    prop_oneof![
        ("[a-zA-Z0-9 _\\-\"\\\\é]{0,24}", 1u32..5000, 1u32..5000).prop_map(|(device_id, w, h)| WireMessage::Hello {
            device_id,
            screen_w_px: w,
            screen_h_px: h
        }),
        (any::<u64>(), unit_quat()).prop_map(|(t, q)| WireMessage::Orientation { t, q }),
        (any::<u64>(), phase, finite(), finite()).prop_map(|(t, phase, x_px, y_px)| WireMessage::Touch {
            t,
            phase,
            x_px,
            y_px
        }),
        any::<u64>().prop_map(|t| WireMessage::Footswitch { t }),
        any::<u64>().prop_map(|t| WireMessage::Calibrate { t }),
        (any::<u64>(), any::<u32>(), technique, condition, vec3(), 0.001f64..1e4).prop_map(
            |(t, trial_id, technique, condition, target, radius_cm)| WireMessage::TrialBegin {
                t,
                trial_id,
                technique,
                condition,
                target,
                radius_cm
            }
        ),
        (any::<u64>(), any::<u32>(), any::<u64>(), 0.0f64..1e6, 0.0f64..1e7)
            .prop_map(|(t, trial_id, mt_ms, d_cm, t_px)| WireMessage::TrialEnd { t, trial_id, mt_ms, d_cm, t_px }),
        (any::<u64>(), vec3(), vec3(), vec3(), vec3(), vec3(), any::<bool>(), "[a-z_]{1,16}").prop_map(
            |(t, cursor, pivot, e1, e2, target, matched, phase)| WireMessage::StateSnapshot {
                t,
                cursor,
                pivot,
                e1,
                e2,
                target,
                matched,
                phase
            }
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn decode_inverts_encode(m in message()) {
        let bytes = encode(&m).unwrap();
        prop_assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 1);
        prop_assert_eq!(*bytes.last().unwrap(), b'\n');
        prop_assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = decode(&bytes);
    }
}

#[test]
fn orientation_is_exact_once_normalized() {
    // A decoded orientation re-encodes and decodes to itself exactly.
    let m = decode(br#"{"type":"orientation","t":9,"q":[0.6003,0.8004,0,0]}"#).unwrap();
    assert_eq!(decode(&encode(&m).unwrap()).unwrap(), m);
}

#[test]
fn bad_lines_do_not_end_the_session() {
    let lines: Vec<&[u8]> = vec![
        br#"{"type":"hello","device_id":"p","screen_w_px":400,"screen_h_px":800}"#,
        b"not json at all",
        br#"{"type":"warp","t":3}"#,
        br#"{"type":"touch","t":4,"phase":"down"}"#,
        br#"{"type":"orientation","t":5,"q":[3,0,0,0]}"#,
        br#"{"type":"orientation","t":6,"q":[1,0,0,0]}"#,
    ];
    let mut session = Session::new(SessionConfig::default());
    let mut errors = Vec::new();
    let mut snapshots = 0;
    for (i, line) in lines.iter().enumerate() {
        match decode(line) {
            Ok(m) => snapshots += session.ingest(1, &m, i as u64).unwrap().len(),
            Err(e) => errors.push(e),
        }
    }
    assert!(matches!(errors[0], DecodeError::Parse { .. }));
    assert!(matches!(errors[1], DecodeError::UnknownType { .. }));
    assert!(matches!(errors[2], DecodeError::Schema { .. }));
    assert!(matches!(errors[3], DecodeError::Range { .. }));
    assert_eq!(errors.len(), 4);
    assert!(snapshots >= 3);
    assert_eq!(session.engine().unwrap().current().unwrap().phase().as_str(), "ready");
}

#[test]
fn replayed_log_reproduces_snapshots() {
    let cfg = SessionConfig { gain: Some(0.1), ..Default::default() };
    let mut live = Session::new(cfg);
    let mut log = vec![live.header()];
    let mut broadcast = Vec::new();
    let mut msgs = vec![WireMessage::Hello { device_id: "a".into(), screen_w_px: 400, screen_h_px: 800 }];
    for k in 0..60u64 {
        msgs.push(WireMessage::orientation(k, Quat::from_axis_angle_deg(Vec3::new(1.0, 0.5, 0.0), k as f64 * 0.4)));
        if k % 10 == 3 {
            msgs.push(WireMessage::touch(k, TouchPhase::Down, 10.0, 20.0));
        }
        if k % 10 > 3 {
            msgs.push(WireMessage::touch(k, TouchPhase::Move, 10.0 + k as f64, 20.0 - k as f64 * 0.5));
        }
        if k % 10 == 9 {
            msgs.push(WireMessage::touch(k, TouchPhase::Up, 0.0, 0.0));
            msgs.push(WireMessage::Footswitch { t: k });
        }
    }
    for (i, m) in msgs.into_iter().enumerate() {
        let host_t = 1000 + i as u64;
        broadcast.extend(live.ingest(7, &m, host_t).unwrap());
        log.push(LogRecord::Ingest { host_t, conn: 7, msg: m });
    }
    let mut file = Vec::new();
    planecast::session::write_log(&mut file, &log).unwrap();
    let read = planecast::session::read_log(file.as_slice()).unwrap();
    let out = replay(&read).unwrap();
    assert_eq!(out.broadcast, broadcast);
    assert_eq!(out.records, live.records());
}
