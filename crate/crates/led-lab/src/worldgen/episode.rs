//! Episode scripting: start sampling, the Observer movement policy,
//! template dialogs, split planning, and ground-truth validation.
//!
//! Dialogs are generated from templates but answered truthfully from
//! the environment, and `validate_episode` re-derives every answer by
//! parsing the question and querying ground truth.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::catalog::{category_name, Catalog, HALLWAY};
use super::gen::signature_counts;
use super::{Environment, Episode, Message, Role, Split, WorldError};

pub const SCHEMA_VERSION: u32 = 1;

/// Knobs for the Observer policy and dialog scripting.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyParams {
    /// hard cap on navigation steps per episode
    pub max_steps: usize,
    pub min_rounds: usize,
    pub max_rounds: usize,
    /// rejection-sampling separation between starts, meters
    pub min_start_separation_m: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            max_steps: 20,
            min_rounds: 2,
            max_rounds: 4,
            min_start_separation_m: 5.0,
        }
    }
}

/// Which environments feed each split. Indices are positions in the
/// caller's environment list; val_seen reuses train environments with
/// held-out start locations, so it has no entry here.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub val_unseen: Vec<usize>,
    pub test: Vec<usize>,
}

/// Randomly partition `n_envs` environment ordinals.
pub fn build_splits(
    n_envs: usize,
    n_val_unseen: usize,
    n_test: usize,
    rng: &mut ChaCha12Rng,
) -> Result<SplitPlan, WorldError> {
    if n_envs < 4 {
        return Err(WorldError::Config(format!(
            "need at least 4 environments to form splits, got {n_envs}"
        )));
    }
    if n_val_unseen + n_test + 1 > n_envs || n_val_unseen == 0 {
        return Err(WorldError::Config(format!(
            "split sizes (val_unseen {n_val_unseen}, test {n_test}) leave no train \
             environments out of {n_envs}"
        )));
    }
    let mut idx: Vec<usize> = (0..n_envs).collect();
    idx.shuffle(rng);
    let mut plan = SplitPlan {
        val_unseen: idx.drain(..n_val_unseen).collect(),
        test: idx.drain(..n_test).collect(),
        train: idx,
    };
    plan.train.sort_unstable();
    plan.val_unseen.sort_unstable();
    plan.test.sort_unstable();
    Ok(plan)
}

/// Rejection-sample start nodes at least `min_sep` meters apart on the
/// same floor. Falls back to accepting closer starts once the floor is
/// saturated, so the requested count is always met when the graph has
/// enough nodes.
pub fn sample_start_locations(
    env: &Environment,
    count: usize,
    min_sep_m: f64,
    rng: &mut ChaCha12Rng,
) -> Vec<u32> {
    let count = count.min(env.nav_nodes.len());
    let mut picked: Vec<u32> = Vec::with_capacity(count);
    let mut misses = 0usize;
    while picked.len() < count {
        let cand = rng.gen_range(0..env.nav_nodes.len() as u32);
        let node = env.node(cand);
        let ok = !picked.contains(&cand)
            && (misses > 200
                || picked.iter().all(|&p| {
                    let q = env.node(p);
                    q.floor_index != node.floor_index
                        || ((q.position.0 - node.position.0).powi(2)
                            + (q.position.1 - node.position.1).powi(2))
                        .sqrt()
                            >= min_sep_m
                }));
        if ok {
            picked.push(cand);
            misses = 0;
        } else {
            misses += 1;
        }
    }
    picked
}

/// BFS distances and parents over the nav graph from `start`.
fn bfs(env: &Environment, start: u32) -> (Vec<usize>, Vec<u32>) {
    let n = env.nav_nodes.len();
    let mut dist = vec![usize::MAX; n];
    let mut parent = vec![u32::MAX; n];
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(a, b) in &env.nav_edges {
        adj[a as usize].push(b);
        adj[b as usize].push(a);
    }
    for nbrs in &mut adj {
        nbrs.sort_unstable();
    }
    dist[start as usize] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u as usize] {
            if dist[v as usize] == usize::MAX {
                dist[v as usize] = dist[u as usize] + 1;
                parent[v as usize] = u;
                queue.push_back(v);
            }
        }
    }
    (dist, parent)
}

/// The Observer walks toward the most identifiable room within reach:
/// stay if the start room's signature is already unique in the
/// environment, otherwise move to the nearest node in a reachable
/// non-hallway room with the rarest signature.
fn plan_trajectory(env: &Environment, start: u32, max_steps: usize) -> Vec<u32> {
    let counts = signature_counts(env);
    let node = env.node(start);
    let floor = node.floor_index;
    if let Some(room) = env.node_room(node) {
        if env.floors[floor].rooms[room].category != HALLWAY && counts[floor][room] == 1 {
            return vec![start];
        }
    }
    let (dist, parent) = bfs(env, start);
    let mut best: Option<(usize, usize, u32)> = None; // (sig count, dist, node)
    for cand in env.floor_nodes(floor) {
        let d = dist[cand.node_id as usize];
        if d == usize::MAX || d > max_steps {
            continue;
        }
        let Some(room) = env.node_room(cand) else { continue };
        if env.floors[floor].rooms[room].category == HALLWAY {
            continue;
        }
        let key = (counts[floor][room], d, cand.node_id);
        if best.is_none_or(|b| key < b) {
            best = Some(key);
        }
    }
    let Some((_, _, goal)) = best else {
        return vec![start];
    };
    let mut path = vec![goal];
    while *path.last().unwrap() != start {
        path.push(parent[*path.last().unwrap() as usize]);
    }
    path.reverse();
    path
}

fn number_word(n: usize) -> &'static str {
    const WORDS: &[&str] = &[
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    WORDS.get(n).copied().unwrap_or("many")
}

fn article(noun: &str) -> &'static str {
    match noun.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// (type, color) pairs of objects in a room, placement order.
fn room_objects(env: &Environment, floor: usize, room: usize) -> Vec<(u8, u8)> {
    env.floors[floor]
        .objects
        .iter()
        .filter(|o| o.room == room)
        .map(|o| (o.object_type, o.color))
        .collect()
}

const LOCATOR_PROMPTS: &[&str] = &[
    "hello ! where are you right now ?",
    "hi , can you describe where you are ?",
    "we lost track of you . what does your room look like ?",
    "hey there . tell me about the room you are in .",
    "where did you end up ? describe your surroundings .",
    "i need to find you . what can you see around you ?",
    "could you look around and tell me what is there ?",
    "what sort of place are you standing in ?",
];

const DESC_OPENERS: &[&str] = &[
    "i am in",
    "i ended up in",
    "i am standing in",
    "looks like i am in",
    "i walked into",
    "right now i am in",
];

const COLOR_QUESTIONS: &[&str] = &[
    "what color is the {} ?",
    "can you tell me the color of the {} ?",
    "which color is the {} there ?",
    "what is the color of the {} ?",
];

const COUNT_QUESTIONS: &[&str] = &[
    "how many objects are in the room ?",
    "how many things can you count there ?",
    "how many items do you see in the room ?",
    "count the objects for me . how many are there ?",
];

const CATEGORY_QUESTIONS: &[&str] = &[
    "what kind of room is it ?",
    "what sort of room are you in ?",
    "what type of room is that ?",
    "which kind of room would you say it is ?",
];

const PRESENCE_QUESTIONS: &[&str] = &[
    "do you see {} {} ?",
    "is there {} {} in the room ?",
    "any chance there is {} {} nearby ?",
    "can you spot {} {} from where you stand ?",
];

fn describe_room(env: &Environment, floor: usize, room: usize, rng: &mut ChaCha12Rng) -> String {
    let cat = Catalog::global();
    let cname = category_name(env.floors[floor].rooms[room].category);
    let opener = DESC_OPENERS.choose(rng).unwrap();
    let objects = room_objects(env, floor, room);
    let mut text = format!("{opener} {} {cname} .", article(cname));
    if objects.is_empty() {
        text.push_str(" it is empty .");
    } else {
        let parts: Vec<String> = objects
            .iter()
            .map(|&(t, c)| {
                let color = cat.color_name(c);
                format!("{} {color} {}", article(color), cat.type_name(t))
            })
            .collect();
        text.push_str(&format!(" i can see {} .", parts.join(" and ")));
    }
    text
}

fn question_round(
    env: &Environment,
    floor: usize,
    room: usize,
    rng: &mut ChaCha12Rng,
) -> (String, String) {
    let cat = Catalog::global();
    let objects = room_objects(env, floor, room);
    let kinds: &[usize] = if objects.is_empty() { &[1, 2, 3] } else { &[0, 1, 2, 3] };
    match *kinds.choose(rng).unwrap() {
        0 => {
            let &(t, _) = objects.choose(rng).unwrap();
            let tname = cat.type_name(t);
            let q = COLOR_QUESTIONS.choose(rng).unwrap().replace("{}", tname);
            let mut colors: Vec<&str> = objects
                .iter()
                .filter(|&&(ot, _)| ot == t)
                .map(|&(_, c)| cat.color_name(c))
                .collect();
            colors.sort_unstable();
            colors.dedup();
            let a = format!("the {tname} is {} .", colors.join(" and "));
            (q, a)
        }
        1 => {
            let q = (*COUNT_QUESTIONS.choose(rng).unwrap()).to_string();
            let a = if objects.len() == 1 {
                "there is one object here .".to_string()
            } else {
                format!("there are {} objects here .", number_word(objects.len()))
            };
            (q, a)
        }
        2 => {
            let q = (*CATEGORY_QUESTIONS.choose(rng).unwrap()).to_string();
            let cname = category_name(env.floors[floor].rooms[room].category);
            let a = format!("it is {} {cname} .", article(cname));
            (q, a)
        }
        _ => {
            // ask about a present object half the time, otherwise any type
            let t = if !objects.is_empty() && rng.gen::<bool>() {
                objects.choose(rng).unwrap().0
            } else {
                rng.gen_range(0..cat.types.len() as u8)
            };
            let tname = cat.type_name(t);
            let tmpl = PRESENCE_QUESTIONS.choose(rng).unwrap();
            let q = tmpl
                .replacen("{}", article(tname), 1)
                .replacen("{}", tname, 1);
            let present = objects.iter().any(|&(ot, _)| ot == t);
            let a = if present {
                format!("yes , there is {} {tname} .", article(tname))
            } else {
                format!("no , i do not see any {tname} .")
            };
            (q, a)
        }
    }
}

/// Script one episode: trajectory by the Observer policy, then a
/// template dialog about the final room, answered from ground truth.
pub fn script_episode(
    env: &Environment,
    episode_id: &str,
    start_node: u32,
    split: Split,
    params: &PolicyParams,
    rng: &mut ChaCha12Rng,
) -> Result<Episode, WorldError> {
    if start_node as usize >= env.nav_nodes.len() {
        return Err(WorldError::RejectedInput(format!(
            "start node {start_node} not in environment {}",
            env.env_id
        )));
    }
    if params.min_rounds < 1 || params.min_rounds > params.max_rounds || params.max_rounds > 8 {
        return Err(WorldError::Config("dialog rounds must lie in 1–8".into()));
    }
    let trajectory = plan_trajectory(env, start_node, params.max_steps);
    let last = env.node(*trajectory.last().unwrap());
    let floor = last.floor_index;
    let room = env.node_room(last).ok_or_else(|| {
        WorldError::Generation(format!("node {} is not inside a room", last.node_id))
    })?;

    let rounds = rng.gen_range(params.min_rounds..=params.max_rounds);
    let mut dialog = Vec::with_capacity(rounds * 2);
    dialog.push(Message {
        role: Role::Locator,
        text: (*LOCATOR_PROMPTS.choose(rng).unwrap()).to_string(),
    });
    dialog.push(Message {
        role: Role::Observer,
        text: describe_room(env, floor, room, rng),
    });
    for _ in 1..rounds {
        let (q, a) = question_round(env, floor, room, rng);
        dialog.push(Message { role: Role::Locator, text: q });
        dialog.push(Message { role: Role::Observer, text: a });
    }

    Ok(Episode {
        schema_version: SCHEMA_VERSION,
        episode_id: episode_id.to_string(),
        env_id: env.env_id.clone(),
        start_node,
        trajectory,
        final_position: (floor, last.position.0, last.position.1),
        dialog,
        split,
    })
}

/// Check structural invariants and re-derive every Observer answer
/// from ground truth.
pub fn validate_episode(env: &Environment, ep: &Episode) -> Result<(), WorldError> {
    let fail = |msg: String| Err(WorldError::RejectedInput(msg));
    if ep.schema_version != SCHEMA_VERSION {
        return fail(format!("schema version {} != {SCHEMA_VERSION}", ep.schema_version));
    }
    if ep.env_id != env.env_id {
        return fail(format!("episode references {} not {}", ep.env_id, env.env_id));
    }
    if ep.trajectory.is_empty() || ep.trajectory[0] != ep.start_node {
        return fail("trajectory must start at start_node".into());
    }
    for w in ep.trajectory.windows(2) {
        let edge = (w[0].min(w[1]), w[0].max(w[1]));
        if !env.nav_edges.contains(&edge) {
            return fail(format!("trajectory step {:?} is not a nav edge", w));
        }
    }
    let last = env.node(*ep.trajectory.last().unwrap());
    if ep.final_position != (last.floor_index, last.position.0, last.position.1) {
        return fail("final_position does not match the trajectory end".into());
    }
    if ep.dialog.len() < 2 || ep.dialog.len() % 2 != 0 {
        return fail("dialog must be non-empty Locator/Observer pairs".into());
    }
    for (i, m) in ep.dialog.iter().enumerate() {
        let want = if i % 2 == 0 { Role::Locator } else { Role::Observer };
        if m.role != want {
            return fail(format!("message {i} has the wrong role"));
        }
    }
    if !(1..=8).contains(&ep.rounds()) {
        return fail(format!("implausible round count {}", ep.rounds()));
    }

    let floor = last.floor_index;
    let room = env
        .node_room(last)
        .ok_or_else(|| WorldError::RejectedInput("final node outside any room".into()))?;
    let cat = Catalog::global();
    let cname = category_name(env.floors[floor].rooms[room].category);
    let objects = room_objects(env, floor, room);

    // round 1: the description must name the category and every object
    let desc = &ep.dialog[1].text;
    if !desc.contains(cname) {
        return fail(format!("description omits the room category `{cname}`"));
    }
    for &(t, c) in &objects {
        if !desc.contains(cat.type_name(t)) || !desc.contains(cat.color_name(c)) {
            return fail("description omits an object in the final room".into());
        }
    }

    for pair in ep.dialog[2..].chunks(2) {
        let (q, a) = (&pair[0].text, &pair[1].text);
        check_answer(cat, cname, &objects, q, a)?;
    }
    Ok(())
}

/// Re-derive the truthful answer implied by a question and compare.
fn check_answer(
    cat: &Catalog,
    cname: &str,
    objects: &[(u8, u8)],
    q: &str,
    a: &str,
) -> Result<(), WorldError> {
    let fail = |msg: String| Err(WorldError::RejectedInput(msg));
    let named_type = (0..cat.types.len() as u8)
        .find(|&t| q.split_whitespace().any(|w| w == cat.type_name(t)));
    if q.contains("color") {
        let Some(t) = named_type else {
            return fail(format!("color question names no known type: {q}"));
        };
        for &(ot, c) in objects.iter().filter(|&&(ot, _)| ot == t) {
            let _ = ot;
            if !a.contains(cat.color_name(c)) {
                return fail(format!("answer omits a true color: {a}"));
            }
        }
        let truth: Vec<&str> = objects
            .iter()
            .filter(|&&(ot, _)| ot == t)
            .map(|&(_, c)| cat.color_name(c))
            .collect();
        for cid in 0..cat.colors.len() as u8 {
            let name = cat.color_name(cid);
            if a.split_whitespace().any(|w| w == name) && !truth.contains(&name) {
                return fail(format!("answer claims a false color `{name}`: {a}"));
            }
        }
    } else if q.contains("how many") || q.split_whitespace().any(|w| w == "count") {
        if !a.contains(number_word(objects.len())) {
            return fail(format!(
                "count answer should say {}: {a}",
                number_word(objects.len())
            ));
        }
    } else if q.contains("room is") || q.contains("room are") || q.contains("of room") {
        if !a.contains(cname) {
            return fail(format!("category answer omits `{cname}`: {a}"));
        }
    } else {
        // presence question
        let Some(t) = named_type else {
            return fail(format!("unrecognized question form: {q}"));
        };
        let present = objects.iter().any(|&(ot, _)| ot == t);
        let says_yes = a.trim_start().starts_with("yes");
        if present != says_yes {
            return fail(format!("presence answer is untruthful: {q} -> {a}"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_for;
    use crate::worldgen::catalog::ROOM_CATEGORIES;
    use crate::worldgen::{generate_environment, WorldgenParams};

    fn env() -> Environment {
        generate_environment(21, &WorldgenParams::default()).unwrap()
    }

    #[test]
    fn scripted_episodes_validate() {
        let env = env();
        let params = PolicyParams::default();
        let mut rng = rng_for(21, "episodes");
        let starts = sample_start_locations(&env, 12, params.min_start_separation_m, &mut rng);
        for (i, &s) in starts.iter().enumerate() {
            let ep = script_episode(&env, &format!("ep{i}"), s, Split::Train, &params, &mut rng)
                .unwrap();
            validate_episode(&env, &ep).unwrap();
            assert!(ep.nav_steps() <= params.max_steps);
            assert!((params.min_rounds..=params.max_rounds).contains(&ep.rounds()));
        }
    }

    #[test]
    fn start_separation_holds() {
        let env = env();
        let mut rng = rng_for(3, "starts");
        let starts = sample_start_locations(&env, 6, 5.0, &mut rng);
        for i in 0..starts.len() {
            for j in 0..i {
                let (a, b) = (env.node(starts[i]), env.node(starts[j]));
                if a.floor_index == b.floor_index {
                    let d = ((a.position.0 - b.position.0).powi(2)
                        + (a.position.1 - b.position.1).powi(2))
                    .sqrt();
                    assert!(d >= 5.0 - 1e-9, "starts {i},{j} only {d} m apart");
                }
            }
        }
    }

    #[test]
    fn tampered_answer_rejected() {
        let env = env();
        let params = PolicyParams::default();
        let mut rng = rng_for(5, "tamper");
        let mut ep =
            script_episode(&env, "ep", 0, Split::Train, &params, &mut rng).unwrap();
        // flip the description to a category the room is not in
        let truth = ep.dialog[1].text.clone();
        let wrong = ROOM_CATEGORIES
            .iter()
            .map(|(n, _)| *n)
            .find(|n| !truth.contains(n))
            .unwrap();
        ep.dialog[1].text = format!("i am in a {wrong} . it is empty .");
        assert!(validate_episode(&env, &ep).is_err());
    }

    #[test]
    fn tampered_trajectory_rejected() {
        let env = env();
        let params = PolicyParams::default();
        let mut rng = rng_for(6, "tamper2");
        let mut ep =
            script_episode(&env, "ep", 0, Split::Train, &params, &mut rng).unwrap();
        ep.trajectory.push(ep.trajectory[0]); // not generally an edge to itself
        assert!(validate_episode(&env, &ep).is_err());
    }

    #[test]
    fn split_plan_partitions() {
        let mut rng = rng_for(1, "splits");
        let plan = build_splits(10, 2, 1, &mut rng).unwrap();
        let mut all: Vec<usize> = plan
            .train
            .iter()
            .chain(&plan.val_unseen)
            .chain(&plan.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(plan.val_unseen.len(), 2);
        assert!(build_splits(3, 1, 0, &mut rng).is_err());
        assert!(build_splits(4, 4, 0, &mut rng).is_err());
    }
}
