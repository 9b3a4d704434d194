//! Fills each rule template and checks surface conformance.
//!
//! ```bash
//! cargo run --example templates
//! ```

use deer::templates::{conforms_to, fill, template_for, RuleType};

fn main() {
    let slots = ["an animal lives in the desert", "it is active at night", "it stores water"];
    for rule_type in RuleType::ALL {
        let template = template_for(rule_type);
        let rule = fill(&template, &slots[..template.slot_count]).unwrap();
        println!("{:<10} {:<34} {rule}", rule_type.as_str(), template.surface);
        assert!(conforms_to(&rule, &template));
    }
    let univ = template_for(RuleType::UnivImpl);
    println!("conforms(\"Plants need light.\") = {}", conforms_to("Plants need light.", &univ));
    println!("fill with one slot: {:?}", fill(&univ, &["x"]).unwrap_err().to_string());
}
