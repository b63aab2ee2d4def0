use std::collections::BTreeSet;
use std::sync::Arc;

use agentmesh::executors::Params;
use agentmesh::network::{
    AgentRole, LogicBinding, ParamKind, ParameterSchema, ParameterSpec, Vertex, VertexId,
};
use agentmesh::par::Exec;
use agentmesh::registry::{
    LivenessThresholds, ManualClock, Registration, Registry, RegistryConfig,
};
use agentmesh::scheduler::{resolve_ext, ExtSource};
use agentmesh::testkit::{agent, group, network};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tokio::runtime::Runtime;

use crate::naive;

const SERVICES: usize = 20;
const DUPLICATES: usize = 5;
const QUERIES: usize = 30;
const W_OUTPUT: f64 = 0.3;
const W_INPUT: f64 = 0.3;
const SCORE_TOL: f64 = 1e-12;
const SUSPECT_MS: u64 = 1_000;
const DEAD_MS: u64 = 5_000;
const PARAMS: [&str; 6] = ["p0", "p1", "p2", "p3", "p4", "p5"];

fn schema(names: &[&str], kinds: &[ParamKind]) -> ParameterSchema {
    ParameterSchema::new(
        names
            .iter()
            .zip(kinds)
            .map(|(n, k)| ParameterSpec::required(*n, *k))
            .collect(),
    )
}

fn service(id: &str, input: ParameterSchema, output: ParameterSchema) -> Vertex {
    Vertex::agent(
        id,
        AgentRole {
            name: format!("svc {id}"),
            description: "registered service".into(),
            system_prompt: String::new(),
            input_schema: input,
            output_schema: output,
            logic: LogicBinding::builtin("identity"),
        },
    )
}

fn random_schemas(rng: &mut ChaCha8Rng) -> (ParameterSchema, ParameterSchema) {
    let n_in = rng.random_range(0..=2);
    let ins: Vec<&str> = PARAMS.choose_multiple(rng, n_in).copied().collect();
    let kinds: Vec<ParamKind> = (0..n_in)
        .map(|_| {
            *[ParamKind::Any, ParamKind::String, ParamKind::Number]
                .choose(rng)
                .unwrap()
        })
        .collect();
    let n_out = rng.random_range(1..=3);
    let outs: Vec<&str> = PARAMS.choose_multiple(rng, n_out).copied().collect();
    (
        schema(&ins, &kinds),
        schema(&outs, &vec![ParamKind::Any; n_out]),
    )
}

struct Pool {
    vertexes: Vec<Vertex>,
    /// Ids whose last heartbeat is older than the dead threshold.
    dead: BTreeSet<String>,
}

fn pool(rng: &mut ChaCha8Rng) -> Pool {
    let mut vertexes = Vec::new();
    let mut schemas: Vec<(ParameterSchema, ParameterSchema)> = Vec::new();
    for i in 0..SERVICES {
        let (input, output) = if i >= SERVICES - DUPLICATES {
            schemas[i - (SERVICES - DUPLICATES)].clone()
        } else {
            random_schemas(rng)
        };
        schemas.push((input.clone(), output.clone()));
        vertexes.push(service(&format!("s{i:02}"), input, output));
    }
    // m1 is a member of the group and registered, so discovery must skip it.
    let (input, output) = random_schemas(rng);
    vertexes.push(service("m1", input, output));
    let dead = (0..SERVICES)
        .filter(|_| rng.random_bool(0.2))
        .map(|i| format!("s{i:02}"))
        .collect();
    Pool { vertexes, dead }
}

fn registry(pool: &Pool, exec: Exec) -> Registry {
    let clock = Arc::new(ManualClock::new(0));
    let reg = Registry::in_memory(
        RegistryConfig {
            liveness: LivenessThresholds {
                suspect_after_ms: SUSPECT_MS,
                dead_after_ms: DEAD_MS,
            },
            exec,
        },
        clock.clone(),
    );
    for v in &pool.vertexes {
        reg.register(Registration::new(v.clone())).unwrap();
    }
    clock.advance_ms(DEAD_MS + 1);
    for v in &pool.vertexes {
        if !pool.dead.contains(v.id.as_str()) {
            reg.heartbeat(v.id.as_str()).unwrap();
        }
    }
    clock.advance_ms(SUSPECT_MS + 1);
    reg
}

fn oracle(
    pool: &Pool,
    missing: &[String],
    ctx: &Params,
    exclude: &BTreeSet<VertexId>,
) -> Option<(String, f64)> {
    let wanted: BTreeSet<&str> = missing.iter().map(String::as_str).collect();
    let mut best: Option<(String, f64)> = None;
    for v in &pool.vertexes {
        if pool.dead.contains(v.id.as_str()) || exclude.contains(&v.id) {
            continue;
        }
        let outs: BTreeSet<&str> = v.output_schema().names().collect();
        let coverage = wanted.intersection(&outs).count() as f64 / wanted.len() as f64;
        let accept = if naive::accepts(ctx, v.input_schema()) {
            1.0
        } else {
            0.0
        };
        let score = (W_OUTPUT * coverage + W_INPUT * accept).clamp(0.0, 1.0);
        if score <= 0.0 {
            continue;
        }
        let better = match &best {
            None => true,
            Some((id, s)) => score > *s || (score == *s && v.id.as_str() < id.as_str()),
        };
        if better {
            best = Some((v.id.to_string(), score));
        }
    }
    best
}

pub fn run(_rt: &Runtime) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let pool = pool(&mut rng);
    let net = network(
        vec![
            agent("m1", &[], &["q"]),
            agent("m2", &[], &["r"]),
            group("G", &["m1", "m2"], &[], &[]),
        ],
        vec![],
    );
    let exclude: BTreeSet<VertexId> = ["G", "m1", "m2"].into_iter().map(VertexId::from).collect();
    let registries: Vec<(Exec, Registry)> = Exec::available()
        .iter()
        .map(|&e| (e, registry(&pool, e)))
        .collect();

    let mut found = 0;
    for q in 0..QUERIES {
        let k = rng.random_range(1..=3);
        let mut missing: Vec<String> = PARAMS
            .choose_multiple(&mut rng, k)
            .map(|s| s.to_string())
            .collect();
        missing.sort();
        let n_ctx = rng.random_range(0..=3);
        let ctx: Params = PARAMS
            .choose_multiple(&mut rng, n_ctx)
            .map(|p| {
                (
                    p.to_string(),
                    if rng.random_bool(0.5) {
                        json!("v")
                    } else {
                        json!(3)
                    },
                )
            })
            .collect();
        let want = oracle(&pool, &missing, &ctx, &exclude);
        for (exec, reg) in &registries {
            for _ in 0..2 {
                let got =
                    resolve_ext(&net, Some(reg), &"G".into(), &missing, &ctx, &exclude).map(|r| {
                        match r.source {
                            ExtSource::Discovery { service_id, score } => {
                                assert_eq!(service_id, r.vertex.id.as_str());
                                (service_id, score)
                            }
                            ExtSource::Route => panic!("query {q}: no EXT routes exist"),
                        }
                    });
                match (&got, &want) {
                    (Some((gid, gs)), Some((wid, ws))) => {
                        assert_eq!(
                            gid, wid,
                            "query {q} ({exec:?}): missing {missing:?} ctx {ctx:?}"
                        );
                        assert!(
                            (gs - ws).abs() <= SCORE_TOL,
                            "query {q}: score {gs} vs {ws}"
                        );
                    }
                    (None, None) => {}
                    _ => panic!("query {q} ({exec:?}): got {got:?}, expected {want:?}"),
                }
            }
        }
        found += usize::from(want.is_some());
    }
    format!(
        "{QUERIES} queries x {} exec modes x 2 runs match the scoring oracle ({found} resolved, {DUPLICATES} duplicate schemas tie-broken by id, {} dead skipped, group members excluded)",
        registries.len(),
        pool.dead.len()
    )
}
