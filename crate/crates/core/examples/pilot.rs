use lifelab::aup::{train_aup, AupConfig};
use lifelab::ca::{parse_board, CaRule};
use lifelab::env::{Curriculum, EnvRules, EnvState, TaskKind};
use lifelab::learner::*;
use lifelab::metrics::score_episode;
use lifelab::rng::RngStream;

const TWO_PATH: &str = include_str!("../fixtures/two_path.board");

fn fixture_curriculum(seed: u64, max_steps: u32) -> Curriculum {
    let file = parse_board(TWO_PATH).unwrap();
    let rules = EnvRules { max_steps, ca: CaRule::DETERMINISTIC, ..EnvRules::default() };
    let state = EnvState::from_board_file(&file, TaskKind::AppendStillEasy, rules, RngStream::from_seed(0)).unwrap();
    Curriculum::from_states(TaskKind::AppendStillEasy, vec![state], seed)
}

fn run(seed: u64, eps_end: f64, max_steps: u32) -> (u64, bool, f64) {
    let c = fixture_curriculum(seed, max_steps);
    let master = RngStream::from_seed(seed);
    let aup_cfg = AupConfig { aux_steps: 2_000_000, aup_steps: 400_000, aux_gamma: 0.8, ..AupConfig::default() };
    let qcfg = QConfig {
        kind: QKind::Tabular { visit_decay: false },
        eps: EpsSchedule { start: 1.0, end: eps_end, anneal_steps: 400_000 },
        ..QConfig::default()
    };
    let out = train_aup(&c, &aup_cfg, &qcfg, &master, |_| {}).unwrap();
    let start = c.env_for_episode(0).unwrap();
    let initial = start.board.clone();
    let r = greedy_rollout(&out.policy, &qcfg.state_map, start, &mut RngStream::from_seed(seed).split("eval"));
    let score = score_episode(&initial, &r.final_state.board, r.final_state.step, &CaRule::DETERMINISTIC, 1234);
    (seed, r.reached_goal, score)
}

fn main() {
    for (eps_end, max_steps) in [(0.2f64, 1000u32), (0.3, 1000)] {
        let handles: Vec<_> = (0..16u64).map(move |s| std::thread::spawn(move || run(s, eps_end, max_steps))).collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        let pass = results.iter().filter(|(_, g, s)| *g && *s == 0.0).count();
        println!("eps_end={eps_end} max_steps={max_steps}: pass {pass}/16  {:?}",
            results.iter().map(|(_, g, s)| format!("{}{}", if *g {"G"} else {"-"}, s)).collect::<Vec<_>>());
    }
}
