//! Generators and oracle checks used both by the property suites and by the
//! acceptance suite, which runs them a fixed number of times.

use actuate_core::model::{candidate_splits, State};
use actuate_core::{
    sigmoid_reward, state_entropy, ActionId, ActionUtilityTable, ContextBound, ContextSnapshot, ContextValue,
    DeviceLocalModel, FeedbackEntry, FeedbackKind, Hyperparameters, Proposal, Request,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use super::*;

type Check = Result<(), TestCaseError>;

/// A snapshot inside `bounds`, positioned by fractions in `[0, 1]`.
pub fn inside(bounds: &[ContextBound], f: &[f64; 5]) -> ContextSnapshot {
    let values = bounds
        .iter()
        .map(|b| match b {
            ContextBound::Categorical { labels } => {
                let v: Vec<_> = labels.iter().collect();
                ContextValue::label(v[((f[0] * v.len() as f64) as usize).min(v.len() - 1)].clone())
            }
            ContextBound::Cyclic { lo, width, period } => ContextValue::Scalar(rem(lo + f[2] * width, *period)),
            ContextBound::Numeric { lo, hi } => ContextValue::Scalar(lo + f[3] * (hi - lo)),
            ContextBound::Vector { ranges } => ContextValue::Vector(
                ranges.iter().zip([f[4], f[1]]).map(|([lo, hi], t)| lo + t * (hi - lo)).collect(),
            ),
        })
        .collect();
    ContextSnapshot::new(values, 0)
}

pub fn mid_of(bounds: &[ContextBound]) -> ContextSnapshot {
    inside(bounds, &[0.0, 0.5, 0.5, 0.5, 0.5])
}

pub fn actions(n: usize) -> Vec<ActionId> {
    ACTIONS[..n].iter().map(|a| ActionId::from(*a)).collect()
}

pub fn arb_fracs() -> impl Strategy<Value = [f64; 5]> {
    prop::array::uniform5(0.0..=1.0f64)
}

/// A model with explicit random states and utilities.
pub fn arb_model(max_states: usize) -> impl Strategy<Value = DeviceLocalModel> {
    (1..=4usize, 0..=max_states).prop_flat_map(|(n_actions, n_states)| {
        prop::collection::vec((arb_bounds(), prop::collection::vec(0.001..0.999f64, n_actions)), n_states).prop_map(
            move |states| {
                let schema = schema();
                let mut m =
                    DeviceLocalModel::new("d", actions(n_actions), schema.clone(), Hyperparameters::default()).unwrap();
                for (bounds, us) in states {
                    let mid = mid_of(&bounds);
                    let s = State::from_bounds(&schema, 0, bounds, mid, 0).unwrap();
                    let table = ActionUtilityTable(actions(n_actions).into_iter().zip(us).collect());
                    m.insert_state(s, table).unwrap();
                }
                m
            },
        )
    })
}

pub fn entry(seq: u64, context: ContextSnapshot, action: usize, positive: bool) -> FeedbackEntry {
    FeedbackEntry {
        seq,
        context,
        proposal: Proposal::new("d", Some(ACTIONS[action].into()), 0.5),
        positive,
        kind: FeedbackKind::Explicit,
    }
}

pub fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

/// Inputs of [`check_proposal`].
pub fn arb_proposal_case(
) -> impl Strategy<Value = (DeviceLocalModel, [f64; 5], prop::sample::Index, Option<usize>, bool)> {
    (arb_model(5), arb_fracs(), any::<prop::sample::Index>(), prop::option::of(0..ACTIONS.len()), any::<bool>())
}

/// The proposal equals the best `(state, action)` pair found by exhaustive
/// search, bit for bit.
pub fn check_proposal(
    mut m: DeviceLocalModel,
    fr: [f64; 5],
    pick: prop::sample::Index,
    action: Option<usize>,
    use_state: bool,
) -> Check {
    let c = if use_state && !m.states().is_empty() {
        inside(&pick.get(m.states()).state.bounds, &fr)
    } else {
        snapshot(ROOMS[(fr[0] * 2.99) as usize], fr[2] * 86400.0, fr[3] * 40.0, [fr[4] * 10.0, fr[1] * 10.0])
    };
    let request = Request { class: None, action: action.map(|a| ACTIONS[a].into()), timestamp: 0 };
    let before = m.states().to_vec();
    let p = m.on_receive_request(&request, &c).unwrap();

    let compatible = request.action.as_ref().is_none_or(|a| m.actions().contains(a));
    if !compatible {
        prop_assert_eq!(p.utility, 0.0);
        prop_assert_eq!(p.action, request.action);
        prop_assert_eq!(m.states().len(), before.len());
        return Ok(());
    }
    let allowed: Vec<ActionId> = match &request.action {
        Some(a) => vec![a.clone()],
        None => m.actions().iter().cloned().collect(),
    };
    let states = if before.iter().any(|ls| contains(&ls.state.bounds, &c)) {
        prop_assert_eq!(m.states().len(), before.len());
        before
    } else {
        prop_assert_eq!(m.states().len(), before.len() + 1);
        m.states().to_vec()
    };
    let (u, _, a) = best_proposal(&states, &c, &allowed).unwrap();
    prop_assert_eq!(p.utility, u);
    prop_assert_eq!(p.action, Some(a));
    Ok(())
}

/// Inputs of [`check_knn`].
pub fn arb_knn_case() -> impl Strategy<Value = (DeviceLocalModel, usize, ContextSnapshot)> {
    (arb_model(6).prop_filter("needs a state", |m| !m.states().is_empty()), 1..5usize, arb_snapshot())
}

/// kNN initialization equals the formula evaluated directly, and pulls every
/// utility toward 0.5.
pub fn check_knn(m: DeviceLocalModel, k: usize, c: ContextSnapshot) -> Check {
    let hyper = Hyperparameters { k, ..Hyperparameters::default() };
    let schema = schema();
    let probe = State::around(&schema, 99, &c, &hyper).unwrap();
    let mut hm = DeviceLocalModel::new("d", m.actions().iter().cloned(), schema.clone(), hyper).unwrap();
    for ls in m.states() {
        hm.insert_state(ls.state.clone(), ls.utilities.clone()).unwrap();
    }
    let got = hm.knn_initialize(&probe).unwrap();

    let w = vec![0.2; 5];
    let mut ranked: Vec<_> = hm.states().iter().map(|ls| (state_distance(&schema, ls, &c, &w), ls)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.state.id.cmp(&b.1.state.id)));
    ranked.truncate(k);
    for a in hm.actions() {
        let mut sum = 0.0;
        let mut dev = 0.0;
        for (d, ls) in &ranked {
            let ui = ls.utilities.0[a];
            let ratio = if *d == 0.0 { 0.0 } else { d / probe.radius };
            sum += (ui - 0.5) / (ratio + 1.0);
            dev += (ui - 0.5).abs();
        }
        let expected = 0.5 + sum / k as f64;
        let u = got.get(a).unwrap();
        prop_assert!((u - expected).abs() <= 1e-9, "{a}: {u} vs {expected}");
        prop_assert!((u - 0.5).abs() <= dev / k as f64 + 1e-12);
        let max_dev = ranked.iter().map(|(_, ls)| (ls.utilities.0[a] - 0.5).abs()).fold(0.0, f64::max);
        prop_assert!((u - 0.5).abs() <= max_dev + 1e-12);
    }
    Ok(())
}

/// Inputs of [`check_entropy_and_gains`].
pub fn arb_cache_case() -> impl Strategy<Value = (Vec<ContextBound>, Vec<([f64; 5], usize, bool)>)> {
    (arb_bounds(), prop::collection::vec((arb_fracs(), 0..3usize, any::<bool>()), 1..40))
}

/// State entropy and the gain of every split candidate equal their
/// recomputation from the raw entries.
pub fn check_entropy_and_gains(bounds: Vec<ContextBound>, raw: Vec<([f64; 5], usize, bool)>) -> Check {
    let schema = schema();
    let state = State::from_bounds(&schema, 0, bounds.clone(), mid_of(&bounds), 0).unwrap();
    let entries: Vec<FeedbackEntry> =
        raw.iter().enumerate().map(|(i, (f, a, p))| entry(i as u64, inside(&bounds, f), *a, *p)).collect();
    for e in &entries {
        prop_assert!(contains(&bounds, &e.context));
    }
    let parent = entropy(&entries);
    prop_assert!((state_entropy(&entries) - parent).abs() <= 1e-9);

    let cands = candidate_splits(&schema, &state, entries.iter(), 8).unwrap();
    let mut expected_count = 0;
    for b in &bounds {
        expected_count += match b {
            ContextBound::Numeric { lo, hi } => {
                if hi > lo {
                    8
                } else {
                    0
                }
            }
            ContextBound::Cyclic { width, .. } => {
                if *width > 0.0 {
                    8
                } else {
                    0
                }
            }
            ContextBound::Vector { ranges } => 8 * ranges.iter().filter(|[lo, hi]| hi > lo).count(),
            ContextBound::Categorical { labels } => {
                if labels.len() >= 2 {
                    labels.len()
                } else {
                    0
                }
            }
        };
    }
    prop_assert_eq!(cands.len(), expected_count);

    for cand in &cands {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for e in &entries {
            let l = contains(&cand.left.bounds, &e.context);
            let r = contains(&cand.right.bounds, &e.context);
            prop_assert!(l != r, "{:?} splits {:?} ambiguously", cand.rule, e.context);
            if l {
                left.push(e.clone())
            } else {
                right.push(e.clone())
            }
        }
        let gain = parent - (entropy(&left) + entropy(&right));
        prop_assert!((cand.gain - gain).abs() <= 1e-9);
        prop_assert!(contains(&cand.left.bounds, &cand.left.mid));
        prop_assert!(contains(&cand.right.bounds, &cand.right.mid));
    }
    Ok(())
}

/// A reward step and its opposite cancel, and the step is sigma(logit + delta).
pub fn check_reward(u: f64, delta: f64) -> Check {
    let up = sigmoid_reward(u, delta, true).unwrap();
    let back = sigmoid_reward(up, delta, false).unwrap();
    prop_assert!((back - u).abs() <= 1e-12, "{u} -> {up} -> {back}");
    let down = sigmoid_reward(u, delta, false).unwrap();
    prop_assert!((sigmoid_reward(down, delta, true).unwrap() - u).abs() <= 1e-12);
    prop_assert!((up - sigma(logit(u) + delta)).abs() < 1e-12);
    Ok(())
}
