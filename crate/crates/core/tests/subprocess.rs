//! External objectives and the trainer runner, driven through Python stubs.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde_json::{json, Map, Value};

use llmhpo::codegen::{
    run_codegen_session, ArgType, CodegenSettings, CodegenTemplates, DatasetDescriptor, NdjsonRunner, TrainerRunner,
    FUNCTION_NAME,
};
use llmhpo::llm_client::{CompletionResponse, LlmError, ScriptedClient, ToolCall};
use llmhpo::objectives::{ExternalObjective, ExternalRequestStyle, Objective};
use llmhpo::{EvalError, SearchSpace};

fn stub(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/stubs").join(name).display().to_string()
}

fn objective(mode: &str, timeout: Duration) -> ExternalObjective {
    let space = SearchSpace::builtin("svm").unwrap();
    ExternalObjective::new(space, vec!["python3".into(), stub("objective_stub.py"), mode.into()], timeout, None)
}

fn svm_config(c: f64, gamma: f64) -> llmhpo::Config {
    SearchSpace::builtin("svm").unwrap().config_from_values(&[c, gamma]).unwrap()
}

#[test]
fn external_run_and_eval_requests() {
    let mut obj = objective("ok", Duration::from_secs(10));
    let r = obj.evaluate(&svm_config(2.0, 0.5)).unwrap();
    assert_eq!(r.loss, 4.25);
    assert_eq!(r.train_losses, Some(vec![5.25, 4.25]));
    assert_eq!(obj.evaluate(&svm_config(1.0, 1.0)).unwrap().loss, 2.0);

    let mut obj = objective("ok", Duration::from_secs(10)).with_style(ExternalRequestStyle::Eval { task: "svm".into() });
    assert_eq!(obj.evaluate(&svm_config(1.0, 0.0009765625)).unwrap().loss, 1.0 + 0.0009765625f64.powi(2));
    let mut obj = objective("ok", Duration::from_secs(10)).with_style(ExternalRequestStyle::Eval { task: "xgb".into() });
    match obj.evaluate(&svm_config(1.0, 1.0)) {
        Err(EvalError::Remote { stage, message }) => {
            assert_eq!(stage, "task");
            assert!(message.contains("xgb"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn external_timeout_is_bounded() {
    let mut obj = objective("sleep", Duration::from_millis(500));
    let start = Instant::now();
    let err = obj.evaluate(&svm_config(1.0, 1.0)).unwrap_err();
    assert_eq!(err.kind(), "Timeout");
    assert!(start.elapsed() < Duration::from_millis(2500));
}

#[test]
fn external_garbage_and_crash() {
    let err = objective("garbage", Duration::from_secs(10)).evaluate(&svm_config(1.0, 1.0)).unwrap_err();
    assert_eq!(err.kind(), "ProtocolError");
    assert!(err.to_string().contains("this is not json"));
    let err = objective("crash", Duration::from_secs(10)).evaluate(&svm_config(1.0, 1.0)).unwrap_err();
    assert_eq!(err.kind(), "ProcessError");
    assert!(err.to_string().contains("stub crashed on purpose"), "{err}");
}

const PROGRAM: &str = "def make_model_and_optimizer(lr: float = 0.1, width: int = 8):\n    \"\"\"Toy.\"\"\"\n    while width == 0:\n        pass\n    return (lr - 0.01) ** 2 + 1.0 / width\n";

fn runner(timeout: Duration) -> NdjsonRunner {
    NdjsonRunner::new(vec!["python3".into(), stub("trainer_stub.py")], None, timeout)
}

fn args(v: Value) -> Map<String, Value> {
    v.as_object().unwrap().clone()
}

#[test]
fn runner_define_and_run() {
    let mut r = runner(Duration::from_secs(10));
    let specs = r.define(PROGRAM).unwrap();
    assert_eq!(specs.iter().map(|s| (s.name.as_str(), s.ty)).collect::<Vec<_>>(), vec![("lr", ArgType::Float), ("width", ArgType::Int)]);
    let fb = r.run(&args(json!({"lr": 0.01, "width": 4})), 7, 0).unwrap();
    assert_eq!(fb.train_losses.len(), 7);
    assert_eq!(fb.val_loss, 0.25);
    let err = r.run(&args(json!({"nope": 1})), 3, 0).unwrap_err();
    assert_eq!(err.stage, "runtime");
    assert!(err.message.contains("nope"));
}

#[test]
fn runner_rejects_bad_code() {
    let mut r = runner(Duration::from_secs(10));
    let err = r.define("def make_model_and_optimizer(:\n").unwrap_err();
    assert_eq!(err.stage, "parse");
    assert!(err.message.contains("SyntaxError"));
    let err = r.define("import os\ndef make_model_and_optimizer(f: os.PathLike):\n    return 1\n").unwrap_err();
    assert_eq!(err.stage, "signature");
    assert!(err.message.contains("non-primitive argument"));
}

#[test]
fn runner_timeout_then_redefines() {
    let mut r = runner(Duration::from_millis(800));
    r.define(PROGRAM).unwrap();
    let start = Instant::now();
    let err = r.run(&args(json!({"width": 0})), 3, 0).unwrap_err();
    assert_eq!(err.stage, "timeout");
    assert!(start.elapsed() < Duration::from_millis(2800));
    let fb = r.run(&args(json!({"lr": 0.01, "width": 2})), 3, 0).unwrap();
    assert_eq!(fb.val_loss, 0.5);
}

fn call(lr: f64, width: i64) -> Result<CompletionResponse, LlmError> {
    let mut r = CompletionResponse::text("", 0);
    r.tool_call = Some(ToolCall { name: FUNCTION_NAME.into(), arguments: json!({"lr": lr, "width": width}).to_string() });
    Ok(r)
}

#[test]
fn codegen_session_against_stub_runner() {
    let broken = "reasoning: try this\n\ncode:\n```python\ndef make_model_and_optimizer(lr: float:\n    return 1\n```\n";
    let good = format!("reasoning: fixed it\n\ncode:\n```python\n{PROGRAM}```\n");
    let replies = vec![
        Ok(CompletionResponse::text(broken, 0)),
        Ok(CompletionResponse::text(good, 0)),
        call(0.1, 8),
        call(0.01, 8),
        call(0.01, 2),
        call(0.05, 16),
        call(0.02, 4),
    ];
    let client = ScriptedClient::from_results(replies);
    let dataset = DatasetDescriptor {
        problem_description: "Predict the fare of a taxi ride.".into(),
        in_features: 2,
        x_columns: vec!["distance".into(), "hour".into()],
        y_columns: vec!["fare".into()],
        data_path: "unused.csv".into(),
    };
    let settings = CodegenSettings { epochs: 4, ..CodegenSettings::default() };
    let mut r = runner(Duration::from_secs(10));
    let session = run_codegen_session(&client, &mut r, &dataset, &settings, &CodegenTemplates::default()).unwrap();

    assert_eq!(session.regenerations, 1);
    let regen = &session.transcript[2].content;
    assert!(regen.contains("SyntaxError"), "{regen}");
    assert_eq!(session.trials.len(), 5);
    assert!(session.trials.iter().all(|t| t.feedback.as_ref().is_some_and(|f| f.train_losses.len() == 4)));
    let best = session.best().unwrap();
    // (lr - 0.01)^2 + 1/width over the five calls: 0.1331, 0.125, 0.5, 0.0641, 0.2501.
    assert_eq!(best.index, 4);
    assert!((best.feedback.as_ref().unwrap().val_loss - 0.0641).abs() < 1e-12);
    let feedback = &session.transcript[6].content;
    assert!(feedback.contains("training loss over each epoch: \n0.533, 0.433, 0.333, 0.233\n"), "{feedback}");
    assert!(feedback.contains("validation loss: 0.133\n"), "{feedback}");
    let running: Vec<f64> = session.running_best().into_iter().map(Option::unwrap).collect();
    assert!(running.windows(2).all(|w| w[1] <= w[0]));
}
