use aomsr_core::engine::{EventKind, RngStreams, Scheduler, SimTime};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #[test]
    fn events_fire_in_time_then_insertion_order(
        times in proptest::collection::vec(0u64..50, 1..200),
        cancel in proptest::collection::vec(any::<bool>(), 200),
    ) {
        let mut s: Scheduler<usize> = Scheduler::new();
        let mut kept = Vec::new();
        for (i, &t) in times.iter().enumerate() {
            let h = s.schedule(SimTime::from_micros(t), EventKind::TimerExpiry, i).unwrap();
            if cancel[i] {
                prop_assert!(s.cancel(h));
            } else {
                kept.push((t, i));
            }
        }
        kept.sort();
        let mut fired = Vec::new();
        let mut last = SimTime::ZERO;
        while let Some(ev) = s.pop_until(SimTime::from_micros(100)) {
            prop_assert!(ev.fire_at >= last);
            prop_assert_eq!(s.now(), ev.fire_at);
            last = ev.fire_at;
            fired.push((ev.fire_at.as_micros(), ev.payload));
        }
        prop_assert_eq!(fired, kept);
    }

    #[test]
    fn handlers_scheduling_follow_ups_never_move_the_clock_back(
        delays in proptest::collection::vec(0u64..1000, 1..50),
    ) {
        let mut s: Scheduler<usize> = Scheduler::new();
        s.schedule(SimTime::ZERO, EventKind::TrafficTick, 0).unwrap();
        let mut last = SimTime::ZERO;
        let n = s.run_until(SimTime::from_secs(1), |sched, ev| {
            assert!(ev.fire_at >= last);
            last = ev.fire_at;
            if let Some(&d) = delays.get(ev.payload) {
                sched.schedule_in(SimTime::from_micros(d), EventKind::TrafficTick, ev.payload + 1);
            }
        });
        prop_assert_eq!(n as usize, delays.len() + 1);
        prop_assert_eq!(s.now(), SimTime::from_secs(1));
    }

    #[test]
    fn labelled_streams_are_reproducible(seed in any::<u64>(), label in "[a-z/0-9]{1,12}") {
        let a: Vec<u64> = {
            let mut r = RngStreams::new(seed).stream(&label);
            (0..16).map(|_| r.gen()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RngStreams::new(seed).stream(&label);
            (0..16).map(|_| r.gen()).collect()
        };
        prop_assert_eq!(a, b);
    }
}

#[test]
fn past_events_are_rejected() {
    let mut s: Scheduler<()> = Scheduler::new();
    s.schedule(SimTime::from_secs(2), EventKind::TimerExpiry, ()).unwrap();
    s.pop_until(SimTime::from_secs(5)).unwrap();
    assert!(s.schedule(SimTime::from_secs(1), EventKind::TimerExpiry, ()).is_err());
}
