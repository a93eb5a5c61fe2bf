use covert_lab::agent::{
    arbitrate_collision, decide_speak, schedule_next_scan, AgentState, ParticipationScheduler, SchedulerConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SCANS: usize = 10_000;

#[test]
fn scan_gaps_are_uniform_around_the_base_interval() {
    let cfg = SchedulerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut now = 0;
    let mut gaps = Vec::with_capacity(SCANS);
    for _ in 0..SCANS {
        let next = schedule_next_scan(&cfg, now, &mut rng);
        gaps.push((next - now) as f64 / 1000.0);
        now = next;
    }
    assert!(gaps.iter().all(|g| (18.75..=31.25).contains(g)));
    let mean = gaps.iter().sum::<f64>() / SCANS as f64;
    assert!((mean - 25.0).abs() < 0.25, "mean gap {mean}");
    // Uniform on [18.75, 31.25]: each quarter holds a quarter of the mass.
    for q in 0..4 {
        let lo = 18.75 + 3.125 * q as f64;
        let share = gaps.iter().filter(|&&g| g >= lo && g < lo + 3.125).count() as f64 / SCANS as f64;
        assert!((share - 0.25).abs() < 0.02, "quarter {q}: {share}");
    }
}

#[test]
fn speak_decisions_are_fair_coins_below_the_cap() {
    let cfg = SchedulerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let state = AgentState::new(0);
    let yes = (0..SCANS).filter(|_| decide_speak(&cfg, &state, &mut rng)).count() as f64 / SCANS as f64;
    assert!((yes - 0.5).abs() < 0.02, "speak share {yes}");
    let capped = AgentState { consecutive_count: cfg.max_consecutive, ..AgentState::new(0) };
    assert!((0..SCANS).all(|_| !decide_speak(&cfg, &capped, &mut rng)));
}

#[test]
fn collisions_pick_each_agent_half_the_time() {
    let cfg = SchedulerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pair = ["Bob".to_string(), "Stuart".to_string()];
    let mut bob = 0;
    for _ in 0..SCANS {
        let a = arbitrate_collision(&cfg, &pair, &mut rng);
        assert_eq!(a.delayed.len(), 1);
        assert_eq!(a.delayed[0].1, 10_000);
        assert_ne!(a.delayed[0].0, a.speaker);
        bob += (a.speaker == "Bob") as usize;
    }
    let share = bob as f64 / SCANS as f64;
    assert!((share - 0.5).abs() < 0.02, "Bob wins {share}");
}

/// Agents alone in a room, posting the instant they are chosen.
#[test]
fn live_scheduler_respects_cap_and_delay() {
    let cfg = SchedulerConfig::default();
    let names = ["Bob".to_string(), "Stuart".to_string()];
    let mut s = ParticipationScheduler::new(cfg.clone(), "g1", &names, 11);
    let mut run: (String, u32) = (String::new(), 0);
    let mut t = 0;
    let mut delayed_checked = 0;
    while s.scans < 2 * SCANS as u64 {
        let before: Vec<Option<u64>> = s.agents().iter().map(|a| a.state.pending_delay_ms).collect();
        for who in s.due(t) {
            run = if run.0 == who { (who.clone(), run.1 + 1) } else { (who.clone(), 1) };
            assert!(run.1 <= cfg.max_consecutive, "{who} posted {} in a row", run.1);
            s.on_message(&who);
        }
        for (a, b) in s.agents().iter().zip(&before) {
            if let (Some(due), None) = (a.state.pending_delay_ms, b) {
                assert_eq!(due, t + cfg.collision_delay_ms());
                delayed_checked += 1;
            }
        }
        t += cfg.tick_ms;
    }
    assert!(delayed_checked > 0, "no collision occurred");
    let share = s.speak_decisions as f64 / s.scans as f64;
    // Busy agents and capped runs skip some draws, so the share sits at or below one half.
    assert!(share <= 0.52 && share > 0.3, "speak share {share}");
}
