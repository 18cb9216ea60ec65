use autograms::authoring::bundled::example;
use autograms::config::AutogramConfig;
use autograms::expr::{parse_source, ExprError, HostRegistry, Interpreter, MapEnv, Value, DEFAULT_BUILTINS};
use autograms::llm::answer_to_index;
use autograms::llm::scripted::Fixture;
use autograms::llm::Backends;
use autograms::memory::MemoryObject;
use autograms::model::{ActionKind, GraphModel, NodeSpec};
use autograms::runtime::Session;
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        (-50i64..50).prop_map(|n| n.to_string()),
        (0i64..40).prop_map(|n| format!("{}.25", n)),
        "[a-z ]{0,6}".prop_map(|s| format!("'{s}'")),
        Just("a".to_string()),
        Just("b".to_string()),
        Just("xs".to_string()),
        Just("True".to_string()),
        Just("None".to_string()),
    ]
}

fn source() -> impl Strategy<Value = String> {
    leaf().prop_recursive(4, 32, 3, |inner| {
        let op = prop_oneof![
            Just("+"), Just("-"), Just("*"), Just("//"), Just("%"), Just("=="), Just("!="),
            Just("<"), Just(">="), Just("and"), Just("or"), Just("in")
        ];
        prop_oneof![
            (inner.clone(), op, inner.clone()).prop_map(|(l, o, r)| format!("({l} {o} {r})")),
            inner.clone().prop_map(|e| format!("(not {e})")),
            inner.clone().prop_map(|e| format!("(-{e})")),
            prop::collection::vec(inner.clone(), 0..3).prop_map(|v| format!("[{}]", v.join(", "))),
            inner.clone().prop_map(|e| format!("len({e})")),
            (inner.clone(), inner.clone()).prop_map(|(c, i)| format!("{c}[{i}]")),
            inner.clone().prop_map(|k| format!("{{'k': {k}}}")),
            inner.prop_map(|e| format!("str({e}).upper()")),
        ]
    })
}

fn env() -> MapEnv {
    MapEnv::new()
        .with("a", Value::Int(3))
        .with("b", Value::Str("hi".into()))
        .with("xs", Value::list(vec![Value::Int(1), Value::Int(2)]))
}

fn same_result(x: &Result<Value, ExprError>, y: &Result<Value, ExprError>) -> bool {
    match (x, y) {
        (Ok(a), Ok(b)) => a.equals(b) || (a.to_string() == b.to_string()),
        (Err(a), Err(b)) => a == b,
        _ => false,
    }
}

proptest! {
    #[test]
    fn display_reparses_to_same_tree(src in source()) {
        let e1 = parse_source(&src).unwrap();
        let printed = e1.to_string();
        let e2 = parse_source(&printed).unwrap();
        prop_assert_eq!(&e1, &e2);
        prop_assert_eq!(e2.to_string(), printed);
        let interp = Interpreter::default();
        let r1 = interp.evaluate(&e1, &mut env());
        let r2 = interp.evaluate(&e2, &mut env());
        prop_assert!(same_result(&r1, &r2), "{:?} vs {:?}", r1, r2);
    }

    #[test]
    fn empty_whitelist_blocks_every_call(
        name in prop_oneof![
            prop::sample::select(DEFAULT_BUILTINS.to_vec()).prop_map(str::to_string),
            prop::sample::select(vec!["open", "eval", "exec", "__import__", "getattr", "globals"]).prop_map(str::to_string),
            "[a-z_]{1,8}",
        ],
        arg in -5i64..5,
    ) {
        let interp = Interpreter::new(Vec::<String>::new(), HostRegistry::new());
        let e = parse_source(&format!("{name}({arg})")).unwrap();
        let r = interp.evaluate(&e, &mut MapEnv::new());
        prop_assert!(matches!(&r, Err(ExprError::UnknownName(n)) if *n == name), "{:?}", r);
    }

    #[test]
    fn wildcard_takes_first_true_member(conds in prop::collection::vec(0i64..4, 1..7), x in 0i64..4) {
        let letters: Vec<char> = ('a'..='z').collect();
        let mut nodes = vec![NodeSpec::new("start", ActionKind::ExecCode).instruction(format!("x = {x}")).transitions(["fam.*"])];
        for (i, c) in conds.iter().enumerate() {
            nodes.push(
                NodeSpec::new(format!("fam.{}", letters[i]), ActionKind::ExecCode)
                    .instruction(format!("chosen = {i}"))
                    .condition(format!("x == {c}")),
            );
        }
        let last = conds.len();
        nodes.push(NodeSpec::new(format!("fam.{}", letters[last]), ActionKind::ExecCode).instruction(format!("chosen = {last}")));
        let graph = GraphModel::from_nodes(AutogramConfig::default(), nodes).unwrap();
        let mut s = Session::new(graph, Backends::scripted(&Fixture::default())).unwrap();
        s.run_to_end().unwrap();
        let want = conds.iter().position(|c| *c == x).unwrap_or(last) as i64;
        let got = s.memory.lookup("chosen").unwrap();
        prop_assert!(got.equals(&Value::Int(want)), "got {} want {}", got, want);
    }

    #[test]
    fn classifier_answers_stay_in_range(raw in ".{0,6}", k in 1usize..27) {
        let c = answer_to_index(&raw, k);
        prop_assert!(c.index < k);
        if c.clamped {
            prop_assert_eq!(c.index, 0);
        }
    }

    #[test]
    fn classifier_letters_map_directly(i in 0usize..26, k in 1usize..27, lower in any::<bool>(), dot in any::<bool>()) {
        let mut raw = ((b'A' + i as u8) as char).to_string();
        if lower { raw = raw.to_lowercase(); }
        if dot { raw.push('.'); }
        let c = answer_to_index(&format!(" {raw} "), k);
        if i < k {
            prop_assert_eq!((c.index, c.clamped), (i, false));
        } else {
            prop_assert_eq!((c.index, c.clamped), (0, true));
        }
    }

    #[test]
    fn resume_from_serialized_memory(
        replies in prop::collection::vec(
            prop::sample::select(vec!["Paris", "London", "Why is it Paris?", "No questions.", "Let's keep going.", "I want to stop."]),
            1..8,
        ),
        cut in 0usize..8,
    ) {
        let ex = example("tutor_bot").unwrap();
        let fresh = || Session::new(ex.graph().unwrap(), ex.backends().unwrap()).unwrap();
        let cut = cut.min(replies.len());

        let mut whole = fresh();
        whole.reply("").unwrap();
        let mut last = None;
        for r in &replies {
            last = Some(whole.reply(r).unwrap());
        }

        let mut first = fresh();
        first.reply("").unwrap();
        for r in &replies[..cut] {
            first.reply(r).unwrap();
        }
        let saved = first.memory.serialize();
        let restored = MemoryObject::deserialize(&saved).unwrap();
        prop_assert_eq!(restored.serialize(), saved);
        let mut second = fresh().with_memory(restored);
        let mut resumed = None;
        for r in &replies[cut..] {
            resumed = Some(second.reply(r).unwrap());
        }
        if cut < replies.len() {
            prop_assert_eq!(resumed, last);
        }
        prop_assert_eq!(&second.memory.visit_log, &whole.memory.visit_log);
        prop_assert_eq!(second.memory.serialize(), whole.memory.serialize());
    }
}
