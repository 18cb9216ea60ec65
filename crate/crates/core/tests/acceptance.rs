//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use autograms::authoring::bundled::example;
use autograms::compiler::compile_source;
use autograms::config::{AutogramConfig, ReplyStartType};
use autograms::expr::{is_valid_generated_name, ExprError, Value};
use autograms::llm::{classify, Backends, ChatPrompt, ClassifierPrompt, LlmBackend, LlmError, Script, ScriptedBackend};
use autograms::memory::{MemoryError, MemoryObject};
use autograms::model::{ActionKind, GraphModel, NodeSpec};
use autograms::runtime::{RuntimeError, Session};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn fibonacci_equivalence() -> Check {
    let started = Instant::now();
    let ex = example("fibonacci").map_err(err)?;
    let mut s = Session::new(ex.graph().map_err(err)?, ex.backends().map_err(err)?).map_err(err)?;
    let (mut a, mut b) = (0i64, 1i64);
    for n in 1..=15i64 {
        let got = s.apply_fn("fibonacci", vec![Value::Int(n)]).map_err(err)?;
        ensure!(got.equals(&Value::Int(a)), "fibonacci({n}) = {got}, want {a}");
        (a, b) = (b, a + b);
    }
    let took = started.elapsed();
    ensure!(took < Duration::from_secs(1), "took {took:?}");
    Ok(())
}

fn conformance_corpus() -> Check {
    let started = Instant::now();
    ensure!(common::CASES.len() >= 20, "only {} programs", common::CASES.len());
    for case in common::CASES {
        common::check(case)?;
    }
    let took = started.elapsed();
    ensure!(took < Duration::from_secs(5), "took {took:?}");
    Ok(())
}

fn wildcard_semantics() -> Check {
    let letters = ['a', 'b', 'c', 'd'];
    for size in 2..=4usize {
        for mask in 0u32..(1 << size) {
            let truth: Vec<bool> = (0..size).map(|i| mask & (1 << i) != 0).collect();
            let mut nodes = vec![NodeSpec::new("start", ActionKind::Transition).transitions(["fam.*"])];
            for (i, t) in truth.iter().enumerate() {
                let mut n = NodeSpec::new(format!("fam.{}", letters[i]), ActionKind::ExecCode).instruction(format!("chosen = {i}"));
                if i + 1 < size {
                    n = n.condition(if *t { "True" } else { "False" });
                }
                nodes.push(n);
            }
            let graph = GraphModel::from_nodes(AutogramConfig::default(), nodes).map_err(err)?;
            let mut s = Session::new(graph, Backends::scripted(&Default::default())).map_err(err)?;
            s.run_to_end().map_err(err)?;
            // if / else-if / else over the conditional members, last member as else
            let mut want = size - 1;
            for (i, t) in truth.iter().take(size - 1).enumerate() {
                if *t {
                    want = i;
                    break;
                }
            }
            let got = s.memory.lookup("chosen");
            ensure!(
                got.as_ref().is_some_and(|v| v.equals(&Value::Int(want as i64))),
                "size {size} truth {truth:?}: got {got:?}, want {want}"
            );
        }
    }
    Ok(())
}

const SCOPES: &str = "\
@global_function
def share():
    gv = 5
    gt = exec_node(action='thought', instruction='think in global')

@function
def mixed():
    mv = 6
    mt = exec_node(action='thought', instruction='think in mixed')
    return mv * 7

def local_reader():
    return outer

outer = 1
share()
r = mixed()
";

fn scope_semantics() -> Check {
    let graph = compile_source(SCOPES, AutogramConfig::default()).map_err(err)?.graph;
    let backends = Backends::new(
        Box::new(ScriptedBackend::new(Script::responses(["global thought", "mixed thought"]).strict())),
        Box::new(ScriptedBackend::new(Script::default().strict())),
    );
    let mut s = Session::new(graph, backends).map_err(err)?;
    s.run_to_end().map_err(err)?;
    let root = &s.memory.stack[0];
    ensure!(s.memory.depth() == 1, "stack depth {}", s.memory.depth());
    ensure!(root.variables.get("gv").is_some_and(|v| v.equals(&Value::Int(5))), "global variable not merged");
    ensure!(root.variables.get("gt").is_some_and(|v| v.equals(&Value::Str("global thought".into()))), "global output not merged");
    let instrs: Vec<&str> = root.turns.iter().map(|t| t.instruction_rendered.as_str()).collect();
    ensure!(instrs == ["think in global"], "root turns {instrs:?}");
    ensure!(!root.variables.contains_key("mv") && !root.variables.contains_key("mt"), "mixed frame leaked variables");
    ensure!(root.variables.get("r").is_some_and(|v| v.equals(&Value::Int(42))), "mixed return value missing");
    match s.apply_fn("local_reader", vec![]) {
        Err(RuntimeError::Expr { source: ExprError::UnknownName(n), .. }) if n == "outer" => {}
        Err(RuntimeError::Memory { source: MemoryError::UnknownName(n), .. }) if n == "outer" => {}
        other => return Err(format!("local frame read caller variable: {other:?}")),
    }
    Ok(())
}

/// Chatbot that records every prompt it is given.
struct Recorder {
    inner: ScriptedBackend,
    seen: Arc<Mutex<Vec<ChatPrompt>>>,
}

impl LlmBackend for Recorder {
    fn generate(&mut self, prompt: &ChatPrompt) -> Result<String, LlmError> {
        self.seen.lock().unwrap().push(prompt.clone());
        self.inner.generate(prompt)
    }

    fn classify_raw(&mut self, prompt: &ClassifierPrompt) -> Result<String, LlmError> {
        self.inner.classify_raw(prompt)
    }
}

fn render_prompts(prompts: &[ChatPrompt]) -> String {
    let mut out = String::new();
    for (i, p) in prompts.iter().enumerate() {
        out.push_str(&format!("--- prompt {}\n", i + 1));
        for (j, input) in p.inputs.iter().enumerate() {
            out.push_str(&format!("[input]\n{input}\n"));
            if let Some(o) = p.outputs.get(j) {
                out.push_str(&format!("[output]\n{o}\n"));
            }
        }
        let kind = match p.start_type {
            ReplyStartType::Prefix => "prefix",
            ReplyStartType::Suffix => "suffix",
        };
        out.push_str(&format!("[reply_start {kind}]\n{}\n", p.reply_start));
    }
    out
}

struct PromptCase {
    name: &'static str,
    config: AutogramConfig,
    nodes: Vec<NodeSpec>,
    responses: &'static [&'static str],
    replies: &'static [&'static str],
}

fn prompt_cases() -> Vec<PromptCase> {
    let chat = |n: &str, i: &str, t: &str| NodeSpec::new(n, ActionKind::Chat).instruction(i).transitions([t]);
    let thought = |n: &str, i: &str, t: &str| NodeSpec::new(n, ActionKind::Thought).instruction(i).transitions([t]);
    vec![
        PromptCase {
            name: "chat_after_user",
            config: AutogramConfig { agent_name: "Tutor".into(), initial_prompt: "You are a tutor.".into(), ..Default::default() },
            nodes: vec![chat("greet", "Greet the user.", "respond"), chat("respond", "Answer the user's question.", "respond")],
            responses: &["Hello!", "It is 4.", "You're welcome."],
            replies: &["", "What is 2+2?", "Thanks"],
        },
        PromptCase {
            name: "thought_after_user",
            config: AutogramConfig::default(),
            nodes: vec![
                chat("greet", "Greet the user.", "think"),
                thought("think", "Decide whether the user is happy.", "answer"),
                chat("answer", "Respond kindly.", "answer"),
            ],
            responses: &["Hi!", "They seem happy.", "Glad to hear it!"],
            replies: &["", "I'm great"],
        },
        PromptCase {
            name: "thought_alone",
            config: AutogramConfig::default(),
            nodes: vec![
                thought("think", "fruits = List three fruits.", "share"),
                chat("share", "Share this list with the user: $fruits", "share"),
            ],
            responses: &["apple, pear, fig", "Here: apple, pear, fig"],
            replies: &[""],
        },
        PromptCase {
            name: "prefix_custom_template",
            config: AutogramConfig {
                agent_name: "Bot".into(),
                initial_prompt: "Be brief.".into(),
                instruction_template: "[<agent_name>] <instruction> || <last_response>".into(),
                reply_start_type: ReplyStartType::Prefix,
                ..Default::default()
            },
            nodes: vec![chat("greet", "Say hi.", "echo"), chat("echo", "Echo the text <agent_name> verbatim.", "echo")],
            responses: &["Bot's reply: Hi.", "Bot's reply: <agent_name>"],
            replies: &["", "hello"],
        },
    ]
}

fn prompt_goldens() -> Check {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/prompts");
    for case in prompt_cases() {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let chatbot = Recorder { inner: ScriptedBackend::new(Script::responses(case.responses.iter().copied()).strict()), seen: seen.clone() };
        let backends = Backends::new(Box::new(chatbot), Box::new(ScriptedBackend::new(Script::default().strict())));
        let graph = GraphModel::from_nodes(case.config, case.nodes).map_err(err)?;
        let mut s = Session::new(graph, backends).map_err(err)?;
        for r in case.replies {
            s.reply(r).map_err(|e| format!("{}: {e}", case.name))?;
        }
        let got = render_prompts(&seen.lock().unwrap());
        let want = fs::read_to_string(dir.join(format!("{}.txt", case.name))).map_err(err)?;
        ensure!(got == want, "{} differs from golden:\n{got}", case.name);
    }
    Ok(())
}

fn tutor(classifier: Script) -> Result<Session, String> {
    let ex = example("tutor_bot").map_err(err)?;
    let fixture = ex.fixture().map_err(err)?;
    let backends = Backends::new(
        Box::new(ScriptedBackend::new(fixture.chatbot)),
        Box::new(ScriptedBackend::new(classifier)),
    );
    Session::new(ex.graph().map_err(err)?, backends).map_err(err)
}

fn run_replies(s: &mut Session, replies: &[&str]) -> Check {
    for r in replies {
        s.reply(r).map_err(err)?;
    }
    Ok(())
}

fn tutor_trace() -> Check {
    let no_interjection = |answers: &[&str]| Script::answers(answers.iter().copied()).answer_rule("Which of the following is True?", "B").strict();

    let mut right = tutor(no_interjection(&["A"]))?;
    run_replies(&mut right, &["", "Paris"])?;
    ensure!(right.memory.visit_log == ["ask_question", "answer_right"], "right path {:?}", right.memory.visit_log);

    let mut wrong = tutor(no_interjection(&["B", "B"]))?;
    run_replies(&mut wrong, &["", "London", "Berlin"])?;
    ensure!(
        wrong.memory.visit_log == ["ask_question", "answer_wrong", "give_answer"],
        "wrong path {:?}",
        wrong.memory.visit_log
    );
    Ok(())
}

fn interjection_override() -> Check {
    // each reply asks the interjection question first, then the transition question
    let mut normal = tutor(Script::answers(["B", "A"]).strict())?;
    run_replies(&mut normal, &["", "Paris"])?;
    ensure!(normal.memory.visit_log == ["ask_question", "answer_right"], "default answer {:?}", normal.memory.visit_log);

    let mut jumped = tutor(Script::answers(["A"]).strict())?;
    run_replies(&mut jumped, &["", "Can we talk about football?"])?;
    ensure!(jumped.memory.visit_log == ["ask_question", "off_topic"], "interjection {:?}", jumped.memory.visit_log);
    ensure!(jumped.transition_log.len() == 1 && jumped.transition_log[0].interjection, "{:?}", jumped.transition_log);
    Ok(())
}

fn self_referential_demo() -> Check {
    let ex = example("self_ref").map_err(err)?;
    let mut s = Session::new(ex.graph().map_err(err)?, ex.backends().map_err(err)?).map_err(err)?;
    s.reply("").map_err(err)?;
    let mut added = Vec::new();
    for i in 0..5 {
        let before: Vec<String> = s.graph.nodes().map(|n| n.name.clone()).collect();
        let out = s.reply(&format!("user turn {i}")).map_err(err)?;
        let after: Vec<String> = s.graph.nodes().map(|n| n.name.clone()).collect();
        ensure!(after.len() == before.len() + 1, "turn {i}: {} -> {} nodes", before.len(), after.len());
        let new = after.iter().find(|n| !before.contains(n)).cloned().unwrap_or_default();
        ensure!(is_valid_generated_name(&new), "turn {i}: invalid name {new:?}");
        ensure!(out.node == new, "turn {i}: replied from {} not {new}", out.node);
        added.push(new);
    }
    let cycle: Vec<&str> = s
        .memory
        .visit_log
        .iter()
        .map(String::as_str)
        .filter(|n| *n == "dynamic_node" || added.iter().any(|a| a == n))
        .collect();
    let want: Vec<&str> = added.iter().flat_map(|a| ["dynamic_node", a.as_str()]).collect();
    ensure!(cycle == want, "visit cycle {cycle:?}");
    Ok(())
}

const TUTOR_REPLIES: &[&str] =
    &["", "London", "London", "No questions.", "Paris", "Why is it Paris?", "Why is it Paris?", "No questions.", "Paris", "No questions."];

fn bundled_tutor() -> Result<Session, String> {
    let ex = example("tutor_bot").map_err(err)?;
    Session::new(ex.graph().map_err(err)?, ex.backends().map_err(err)?).map_err(err)
}

fn serialization_resume() -> Check {
    let mut whole = bundled_tutor()?;
    run_replies(&mut whole, TUTOR_REPLIES)?;
    let want = whole.memory.serialize();
    for k in 1..TUTOR_REPLIES.len() {
        let mut first = bundled_tutor()?;
        run_replies(&mut first, &TUTOR_REPLIES[..k])?;
        let memory = MemoryObject::deserialize(&first.memory.serialize()).map_err(err)?;
        let mut second = bundled_tutor()?.with_memory(memory);
        run_replies(&mut second, &TUTOR_REPLIES[k..])?;
        ensure!(second.memory.visit_log == whole.memory.visit_log, "cut {k}: visit log differs");
        ensure!(second.memory.serialize() == want, "cut {k}: transcript differs");
    }
    Ok(())
}

fn simulate_user_consistency() -> Check {
    let mut s = bundled_tutor()?.with_seed(2024);
    s.reply("").map_err(err)?;
    let mut agree = 0;
    for i in 0..50 {
        let t = s.simulate_turn().map_err(|e| format!("turn {i}: {e}"))?;
        if t.taken_index == Some(t.sampled_index) {
            agree += 1;
        }
    }
    ensure!(agree == 50, "{agree}/50 turns agreed");
    Ok(())
}

static CLAMP_WARNINGS: AtomicUsize = AtomicUsize::new(0);

struct CountWarnings;

impl log::Log for CountWarnings {
    fn enabled(&self, m: &log::Metadata) -> bool {
        m.level() <= log::Level::Warn
    }

    fn log(&self, r: &log::Record) {
        if r.level() == log::Level::Warn && r.args().to_string().starts_with("classifier answer") {
            CLAMP_WARNINGS.fetch_add(1, Ordering::SeqCst);
        }
    }

    fn flush(&self) {}
}

fn classifier_restriction() -> Check {
    log::set_logger(&CountWarnings).map_err(err)?;
    log::set_max_level(log::LevelFilter::Warn);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alphabet: Vec<char> = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcxyz0123456789 .)?!-é".chars().collect();
    for k in 2..=5usize {
        let answers: Vec<String> = (0..1000)
            .map(|_| {
                let len = rng.gen_range(0..4);
                (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
            })
            .collect();
        let mut backend = ScriptedBackend::new(Script::answers(answers.clone()).strict());
        let prompt = ClassifierPrompt { history_text: String::new(), mc_text: "q".into(), num_choices: k };
        let before = CLAMP_WARNINGS.load(Ordering::SeqCst);
        let mut clamped = 0;
        for raw in &answers {
            let c = classify(&mut backend, &prompt).map_err(err)?;
            ensure!(c.index < k, "k={k}: answer {raw:?} gave index {}", c.index);
            clamped += c.clamped as usize;
        }
        let warned = CLAMP_WARNINGS.load(Ordering::SeqCst) - before;
        ensure!(clamped > 0 && warned == clamped, "k={k}: {clamped} clamps but {warned} warnings");
    }
    Ok(())
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 11] = [
        ("fibonacci equivalence", fibonacci_equivalence),
        ("compiler conformance corpus", conformance_corpus),
        ("wildcard semantics", wildcard_semantics),
        ("scope semantics", scope_semantics),
        ("prompt formation goldens", prompt_goldens),
        ("tutor-bot trace", tutor_trace),
        ("interjection override", interjection_override),
        ("self-referential demo", self_referential_demo),
        ("serialization and resume", serialization_resume),
        ("simulate-user self-consistency", simulate_user_consistency),
        ("classifier restriction", classifier_restriction),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(()) => println!("PASS  {name}"),
            Err(e) => {
                println!("FAIL  {name}: {e}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
