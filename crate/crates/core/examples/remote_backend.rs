//! Points the pipeline at an inference server speaking the JSON completions
//! protocol. Without `DEER_REMOTE_URL` it only prints the experiment config
//! that would be used.
//!
//! ```bash
//! DEER_REMOTE_URL=http://127.0.0.1:8000 cargo run --example remote_backend
//! ```

use deer::backend::{CompletionBackend, RemoteBackend, RemoteConfig};
use deer::harness::{BackendConfig, ExperimentConfig};

fn main() {
    let remote = RemoteConfig {
        base_url: std::env::var("DEER_REMOTE_URL").unwrap_or_else(|_| "http://127.0.0.1:8000".into()),
        api_key_env_var: Some("DEER_API_KEY".into()),
        model_name: "my-model".into(),
        timeout_s: 30.0,
        ..Default::default()
    };
    let config = ExperimentConfig { backend: BackendConfig::Remote(remote.clone()), ..Default::default() };
    println!("{}", serde_json::to_string_pretty(&config).unwrap());

    if std::env::var_os("DEER_REMOTE_URL").is_none() {
        return;
    }
    let backend = RemoteBackend::new(remote).unwrap();
    let prompt = "Facts: Owls hunt at night.\nRule: If an animal hunts at night, then it has good hearing.\nIs the rule consistent with the facts? Answer:";
    match deer::backend::yes_no_score(&backend, prompt, Some(0)) {
        Ok(score) => println!("p(yes) = {:.3}", score.value),
        Err(e) => println!("request failed: {e}"),
    }
    println!("tokens in prompt: {:?}", backend.count_tokens(prompt).map(|t| t.count));
}
