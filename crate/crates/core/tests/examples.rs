use autograms::authoring::bundled::example;
use autograms::expr::Value;
use autograms::runtime::Session;

fn session(name: &str) -> Session {
    let ex = example(name).unwrap();
    Session::new(ex.graph().unwrap(), ex.backends().unwrap()).unwrap()
}

#[test]
fn tutor_bot_conversation() {
    let mut s = session("tutor_bot");
    let turns = ["", "London", "London", "No questions.", "Paris", "Why is it Paris?", "No questions."];
    let mut nodes = Vec::new();
    for t in turns {
        nodes.push(s.reply(t).unwrap().node);
    }
    assert_eq!(
        nodes,
        ["ask_question", "answer_wrong", "give_answer", "ask_question", "answer_right", "answer_questions", "ask_question"]
    );
    let out = s.memory.visible_turns().last().unwrap().model_output.clone();
    assert_eq!(out, "What is the capital of France?");
}

#[test]
fn tutor_bot_simulation_agrees() {
    let mut s = session("tutor_bot").with_seed(7);
    s.reply("").unwrap();
    for _ in 0..20 {
        let t = s.simulate_turn().unwrap();
        assert_eq!(t.taken_index, Some(t.sampled_index), "{t:?}");
    }
}

#[test]
fn fibonacci_values() {
    let mut s = session("fibonacci");
    for (n, want) in [(1, 0), (2, 1), (7, 8), (10, 34)] {
        let v = s.apply_fn("fibonacci", vec![Value::Int(n)]).unwrap();
        assert!(v.equals(&Value::Int(want)), "fib({n}) = {v}");
        assert_eq!(s.peak_depth, (n as usize - 1).max(1));
    }
}

#[test]
fn summarize_combines() {
    let mut s = session("summarize");
    let out = s.reply("").unwrap();
    assert_eq!(out.node, "process_summary");
    assert_eq!(out.text, "Here is the combined summary: A cat napped in the rain while a dog barked and then slept.");
    // function locals are gone after the call returns
    assert!(s.memory.lookup("summary1").is_none());
    assert!(s.memory.lookup("summary").is_some());
}

#[test]
fn self_ref_grows_one_node_per_turn() {
    let mut s = session("self_ref");
    let first = s.reply("").unwrap();
    assert_eq!(first.text, "Hi there, What can i help you with?");
    let expected = ["lisbon_tips", "airport_transfer", "food_tip", "best_month", "farewell"];
    for (i, name) in expected.iter().enumerate() {
        let before = s.graph.nodes().count();
        let out = s.reply(&format!("user message {i}")).unwrap();
        assert_eq!(s.graph.nodes().count(), before + 1);
        assert_eq!(&out.node, name);
    }
    let cycle: Vec<&str> = s
        .memory
        .visit_log
        .iter()
        .map(String::as_str)
        .filter(|n| *n == "dynamic_node" || expected.contains(n))
        .collect();
    let mut want = Vec::new();
    for n in expected {
        want.push("dynamic_node");
        want.push(n);
    }
    assert_eq!(cycle, want);
}

#[test]
fn default_config_golden() {
    let cfg = autograms::config::AutogramConfig::from_json_str("{}").unwrap();
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/default_config.json");
    let want = std::fs::read_to_string(path).unwrap();
    assert_eq!(cfg.to_json_pretty(), want.trim_end());
}

#[test]
fn fibonacci_call_edges() {
    use autograms::authoring::{derive_edges, EdgeKind};
    let g = example("fibonacci").unwrap().graph().unwrap();
    let calls: Vec<_> = derive_edges(&g).into_iter().filter(|e| e.kind == EdgeKind::FunctionCall).collect();
    assert_eq!(calls.len(), 2);
    assert!(calls.iter().all(|e| e.to == "fibonacci(n)"));
}
