//! Programs shared by the conformance and acceptance tests, plus the
//! harness that runs each one both ways.

use autograms::compiler::direct::DirectInterpreter;
use autograms::compiler::{compile_source, parse_program};
use autograms::config::AutogramConfig;
use autograms::expr::{HostRegistry, Interpreter, Value};
use autograms::llm::scripted::Fixture;
use autograms::llm::Backends;
use autograms::runtime::Session;

pub struct Case {
    pub name: &'static str,
    pub src: &'static str,
    pub calls: &'static [(&'static str, &'static [i64])],
}

pub const CASES: &[Case] = &[
    Case { name: "arith", src: "a = 3\nb = a * 4 + 2\nc = b // 3\nd = b % 5\ne = -a ** 2\n", calls: &[] },
    Case { name: "strings", src: "s = 'ab'\nt = s + 'cd'\nu = t.upper()\nn = len(t)\nparts = 'x,y,z'.split(',')\nj = '-'.join(parts)\n", calls: &[] },
    Case { name: "lists", src: "xs = [1, 2, 3]\nxs.append(4)\ny = xs[1:3]\nz = sum(xs)\nw = sorted([3, 1, 2])\n", calls: &[] },
    Case { name: "dicts", src: "d = {'a': 1, 'b': 2}\nks = d.keys()\nv = d.get('c', 9)\n", calls: &[] },
    Case { name: "if_chain", src: "x = 7\nif x < 3:\n    y = 'small'\nelif x < 10:\n    y = 'medium'\nelse:\n    y = 'large'\n", calls: &[] },
    Case { name: "if_no_else", src: "x = 1\ny = 0\nif x > 5:\n    y = 1\nz = y + 1\n", calls: &[] },
    Case { name: "while_sum", src: "i = 0\ntotal = 0\nwhile i < 10:\n    total = total + i\n    i = i + 1\n", calls: &[] },
    Case { name: "for_list", src: "acc = []\nfor x in [3, 1, 4, 1, 5]:\n    if x > 2:\n        acc.append(x * 10)\n", calls: &[] },
    Case { name: "for_string", src: "n = 0\nfor ch in 'banana':\n    if ch == 'a':\n        n = n + 1\n", calls: &[] },
    Case { name: "nested_loops", src: "pairs = []\nfor i in range(3):\n    j = 0\n    while j < i:\n        pairs.append([i, j])\n        j = j + 1\n", calls: &[] },
    Case { name: "for_dict_keys", src: "d = {'x': 1, 'y': 2}\nt = 0\nfor k in d.keys():\n    t = t + d[k]\n", calls: &[] },
    Case {
        name: "fib",
        src: "def fib(n):\n    if n == 1:\n        return 0\n    elif n == 2:\n        return 1\n    return fib(n - 1) + fib(n - 2)\n\nr = fib(8)\n",
        calls: &[("fib", &[1]), ("fib", &[6]), ("fib", &[10])],
    },
    Case {
        name: "fact",
        src: "def fact(n):\n    if n <= 1:\n        return 1\n    return n * fact(n - 1)\n\nr = fact(6)\n",
        calls: &[("fact", &[0]), ("fact", &[5])],
    },
    Case {
        name: "local_scope",
        src: "def f(a):\n    b = a + 1\n    return b * 2\n\nb = 100\nr = f(3)\n",
        calls: &[("f", &[2])],
    },
    Case {
        name: "global_fn",
        src: "@global_function\ndef setup(v):\n    shared = v * 3\n    other = 'set'\n\nsetup(4)\nr = shared + 1\n",
        calls: &[],
    },
    Case {
        name: "mixed_fn",
        src: "@function\ndef bump(k):\n    return base + k\n\nbase = 10\nr = bump(5)\n",
        calls: &[],
    },
    Case {
        name: "call_in_condition",
        src: "def is_even(n):\n    return n % 2 == 0\n\nevens = []\nfor i in range(6):\n    if is_even(i):\n        evens.append(i)\n",
        calls: &[("is_even", &[3]), ("is_even", &[4])],
    },
    Case {
        name: "call_in_while",
        src: "def small(n):\n    return n < 5\n\ni = 0\nwhile small(i):\n    i = i + 2\n",
        calls: &[],
    },
    Case {
        name: "early_return_in_loop",
        src: "def first_over(limit):\n    for x in [1, 5, 9, 13]:\n        if x > limit:\n            return x\n    return -1\n\na = first_over(6)\nb = first_over(20)\n",
        calls: &[("first_over", &[0]), ("first_over", &[100])],
    },
    Case {
        name: "return_none",
        src: "def nothing(x):\n    y = x\n\nr = nothing(1)\ns = r == None\n",
        calls: &[("nothing", &[5])],
    },
    Case {
        name: "nested_calls",
        src: "def sq(x):\n    return x * x\n\ndef sumsq(a, b):\n    return sq(a) + sq(b)\n\nr = sumsq(3, 4)\nq = sq(sumsq(1, 1))\n",
        calls: &[("sumsq", &[2, 5])],
    },
    Case {
        name: "exec_node_code",
        src: "x = 2\ny = exec_node(action='python_function', instruction='x * 21')\nexec_node(action='python_function', instruction='z = y + 1')\n",
        calls: &[],
    },
    Case {
        name: "gcd",
        src: "def gcd(a, b):\n    while b != 0:\n        t = b\n        b = a % b\n        a = t\n    return a\n\nr = gcd(84, 36)\n",
        calls: &[("gcd", &[17, 5]), ("gcd", &[100, 75])],
    },
    Case {
        name: "collatz",
        src: "def steps(n):\n    c = 0\n    while n != 1:\n        if n % 2 == 0:\n            n = n // 2\n        else:\n            n = 3 * n + 1\n        c = c + 1\n    return c\n\nr = steps(27)\n",
        calls: &[("steps", &[6])],
    },
];

pub fn session(src: &str) -> Session {
    let compiled = compile_source(src, AutogramConfig::default()).unwrap();
    Session::new(compiled.graph, Backends::scripted(&Fixture::default())).unwrap()
}

fn visible(vars: impl Iterator<Item = (String, Value)>) -> Vec<(String, Value)> {
    let mut v: Vec<_> = vars.filter(|(k, _)| !k.starts_with('_')).collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

fn same(a: &[(String, Value)], b: &[(String, Value)]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|((ka, va), (kb, vb))| ka == kb && va.equals(vb))
}

/// Runs one case through the compiled graph and the direct evaluator.
pub fn check(case: &Case) -> Result<(), String> {
    let interp = Interpreter::new(AutogramConfig::default().allowed_builtins, HostRegistry::new());
    let module = parse_program(case.src).map_err(|e| format!("{}: {e}", case.name))?;
    let mut direct = DirectInterpreter::new(&module, &interp);
    direct.run_main().map_err(|e| format!("{}: direct: {e}", case.name))?;
    let want = visible(direct.globals().clone().into_iter());

    let mut s = session(case.src);
    s.run_to_end().map_err(|e| format!("{}: compiled: {e}", case.name))?;
    let got = visible(s.memory.stack[0].variables.clone().into_iter());
    if !same(&got, &want) {
        return Err(format!("{}: compiled {got:?} direct {want:?}", case.name));
    }

    for (f, args) in case.calls {
        let args: Vec<Value> = args.iter().map(|a| Value::Int(*a)).collect();
        let mut d = DirectInterpreter::new(&module, &interp);
        let want = d.call(f, args.clone()).map_err(|e| format!("{}: direct {f}: {e}", case.name))?;
        let got = session(case.src).apply_fn(f, args).map_err(|e| format!("{}: compiled {f}: {e}", case.name))?;
        if !got.equals(&want) {
            return Err(format!("{}: {f} compiled {got} direct {want}", case.name));
        }
    }
    Ok(())
}
