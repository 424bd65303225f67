use merp_core::hid::{
    merge_streams, read_event_log, to_input_actions, write_event_log, Direction, HidEvent,
    HidEventKind, InputAction, KeyBindings, KeyScheduler, KeyboardFactor,
};
use merp_core::reckoner::MotionEstimate;
use merp_core::Timestamp;
use proptest::prelude::*;

fn estimates() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 1..60)
}

fn estimate(i: usize, dx: f64, dy: f64) -> MotionEstimate {
    MotionEstimate {
        vx: 0.0,
        vy: 0.0,
        dx,
        dy,
        window_end: Timestamp(100_000 * (i as u64 + 1)),
    }
}

fn held_ms(events: &[HidEvent], b: &KeyBindings, dir: Direction) -> i64 {
    events
        .iter()
        .filter_map(|e| match &e.kind {
            HidEventKind::KeyHold { key, duration_ms } if key == b.key(dir) => {
                Some(i64::from(*duration_ms))
            }
            _ => None,
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn hold_time_matches_distance(seq in estimates(), k in 0.05..5.0f64) {
        let b = KeyBindings::default();
        let mut s = KeyScheduler::new(KeyboardFactor::new(k).unwrap(), b.clone());
        let mut all = Vec::new();
        for (i, &(dx, dy)) in seq.iter().enumerate() {
            let ev = s.schedule(&estimate(i, dx, dy));
            let has = |d| held_ms(&ev, &b, d) > 0;
            prop_assert!(!(has(Direction::Right) && has(Direction::Left)));
            prop_assert!(!(has(Direction::Forward) && has(Direction::Backward)));
            all.extend(ev);
        }
        let sx: f64 = seq.iter().map(|e| e.0).sum();
        let sy: f64 = seq.iter().map(|e| e.1).sum();
        let x_ms = held_ms(&all, &b, Direction::Right) - held_ms(&all, &b, Direction::Left);
        let y_ms = held_ms(&all, &b, Direction::Forward) - held_ms(&all, &b, Direction::Backward);
        prop_assert!((x_ms as f64 - k * sx * 1000.0).abs() <= 1.0);
        prop_assert!((y_ms as f64 - k * sy * 1000.0).abs() <= 1.0);
    }

    #[test]
    fn doubling_k_doubles_hold_seconds(m in -5.0..5.0f64, k in 0.01..10.0f64) {
        let one = KeyboardFactor::new(k).unwrap().hold_seconds(m);
        let two = KeyboardFactor::new(2.0 * k).unwrap().hold_seconds(m);
        prop_assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn event_log_round_trips(seq in estimates(), moves in prop::collection::vec((-500i64..500).prop_filter("nonzero", |d| *d != 0), 0..30)) {
        let b = KeyBindings::default();
        let mut s = KeyScheduler::new(KeyboardFactor::new(1.0).unwrap(), b);
        let keys: Vec<_> = seq
            .iter()
            .enumerate()
            .flat_map(|(i, &(dx, dy))| s.schedule(&estimate(i, dx, dy)))
            .collect();
        let mouse: Vec<_> = moves
            .iter()
            .enumerate()
            .map(|(i, &dx)| HidEvent::mouse_move(Timestamp(50_000 * i as u64), dx))
            .collect();
        let merged = merge_streams(mouse, keys).unwrap();
        prop_assert!(merged.windows(2).all(|w| w[0].time <= w[1].time));
        let mut buf = Vec::new();
        write_event_log(&merged, &mut buf).unwrap();
        prop_assert_eq!(read_event_log(buf.as_slice()).unwrap(), merged);
    }

    #[test]
    fn device_actions_pair_up(seq in estimates()) {
        let b = KeyBindings::default();
        let mut s = KeyScheduler::new(KeyboardFactor::new(1.0).unwrap(), b.clone());
        let keys: Vec<_> = seq
            .iter()
            .enumerate()
            .flat_map(|(i, &(dx, dy))| s.schedule(&estimate(i, dx, dy)))
            .collect();
        let actions = to_input_actions(&keys, &b);
        let mut down = std::collections::HashSet::new();
        let mut last = Timestamp::ZERO;
        for (t, a) in &actions {
            prop_assert!(*t >= last);
            last = *t;
            match a {
                InputAction::Press(k) => prop_assert!(down.insert(k.clone())),
                InputAction::Release(k) => prop_assert!(down.remove(k)),
                InputAction::MouseMove(_) => {}
            }
            // opposing keys are never down together
            for d in [Direction::Forward, Direction::Right] {
                prop_assert!(!(down.contains(b.key(d)) && down.contains(b.key(d.opposite()))));
            }
        }
        prop_assert!(down.is_empty());
    }
}
