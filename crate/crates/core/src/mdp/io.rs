//! The MDP JSON file format:
//! `{ "S": int, "A": int, "init": int, "reward": [[..]], "transition": [[[..]]] }`
//! with innermost arrays of length S+1 and index S denoting the goal.
//! serde_json emits shortest-round-trip doubles, so write/read is bit-exact
//! for finite values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelError, TabularSP};

#[derive(Serialize, Deserialize)]
struct MdpFile {
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    init: usize,
    reward: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<f64>>>,
}

pub fn mdp_to_json(mdp: &TabularSP) -> String {
    let file = MdpFile {
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        init: mdp.init_state(),
        reward: mdp.reward_table().to_vec(),
        transition: mdp.transition_table().to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("mdp serialization cannot fail")
}

pub fn mdp_from_json(text: &str) -> Result<TabularSP, ModelError> {
    let file: MdpFile =
        serde_json::from_str(text).map_err(|e| ModelError::BadShape(format!("json: {e}")))?;
    let mdp = TabularSP::new(file.init, file.reward, file.transition)?;
    if mdp.num_states() != file.num_states || mdp.num_actions() != file.num_actions {
        return Err(ModelError::BadShape(format!(
            "declared S={} A={} but tables have S={} A={}",
            file.num_states,
            file.num_actions,
            mdp.num_states(),
            mdp.num_actions()
        )));
    }
    Ok(mdp)
}

pub fn write_mdp_file(mdp: &TabularSP, path: &Path) -> std::io::Result<()> {
    fs::write(path, mdp_to_json(mdp))
}

pub fn read_mdp_file(path: &Path) -> Result<TabularSP, ModelError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ModelError::BadShape(format!("read {}: {e}", path.display())))?;
    mdp_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_exact() {
        // deliberately awkward doubles: non-dyadic, tiny, negative
        let third = 1.0 / 3.0;
        let m = TabularSP::new(
            1,
            vec![vec![0.1, -1.0], vec![1e-300, 0.7 - 0.3]],
            vec![
                vec![vec![third, 1.0 - third - 0.25, 0.25], vec![0.0, 0.0, 1.0]],
                vec![vec![0.5, 0.25, 0.25], vec![0.1, 0.2, 0.7]],
            ],
        )
        .unwrap();
        let round = mdp_from_json(&mdp_to_json(&m)).unwrap();
        assert_eq!(m, round);
    }

    #[test]
    fn json_rejects_inconsistent_header() {
        let text = r#"{"S":2,"A":1,"init":0,"reward":[[0.0]],"transition":[[[0.0,1.0]]]}"#;
        assert!(mdp_from_json(text).is_err());
    }

    #[test]
    fn json_field_names_match_format() {
        let m = TabularSP::new(0, vec![vec![0.5]], vec![vec![vec![0.0, 1.0]]]).unwrap();
        let text = mdp_to_json(&m);
        for key in ["\"S\"", "\"A\"", "\"init\"", "\"reward\"", "\"transition\""] {
            assert!(text.contains(key), "missing {key} in {text}");
        }
        let parsed = mdp_from_json(&text).unwrap();
        assert_eq!(parsed, m);
    }
}
