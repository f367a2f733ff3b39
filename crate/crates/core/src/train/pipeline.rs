//! Sequential stage runner with per-stage checkpoints and curves.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    run_pretrain, run_ppo, run_sft, train_reward_model, Curve, PpoBatchLog, PpoConfig, RewardModel, TrainConfig,
    TrainError,
};
use crate::corpus::{DialoguePair, PreferenceTriple, Vocab};
use crate::lm::{save_checkpoint, ModelState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pt,
    Kpt,
    Sft,
    Rm,
    Ppo,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Pt, Stage::Kpt, Stage::Sft, Stage::Rm, Stage::Ppo];

    /// Checkpoint stage tag.
    pub fn tag(self) -> &'static str {
        match self {
            Stage::Pt => "pt",
            Stage::Kpt => "kpt",
            Stage::Sft => "sft",
            Stage::Rm => "rm",
            Stage::Ppo => "ppo",
        }
    }

    fn rank(self) -> u8 {
        match self {
            Stage::Pt | Stage::Kpt => 0,
            Stage::Sft => 1,
            Stage::Rm => 2,
            Stage::Ppo => 3,
        }
    }

    pub fn is_pretrain(self) -> bool {
        self.rank() == 0
    }

    pub fn parse_list(s: &str) -> Result<Vec<Stage>, TrainError> {
        s.split(',').map(|p| p.trim().parse()).collect()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Stage {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| TrainError::StageOrderInvalid(format!("unknown stage {s:?}")))
    }
}

/// The six stage combinations compared in the method/ablation tables.
pub const TABLE_STAGE_LISTS: [(&str, &[Stage]); 6] = [
    ("PT", &[Stage::Pt]),
    ("PT + SFT", &[Stage::Pt, Stage::Sft]),
    ("PT + SFT + RLHF", &[Stage::Pt, Stage::Sft, Stage::Rm, Stage::Ppo]),
    ("KPT", &[Stage::Kpt]),
    ("KPT + SFT", &[Stage::Kpt, Stage::Sft]),
    ("KPT + SFT + RLHF", &[Stage::Kpt, Stage::Sft, Stage::Rm, Stage::Ppo]),
];

/// Exactly one pre-training stage, first; no repeats; canonical order
/// pre-train < SFT < RM < PPO; PPO needs RM.
pub fn validate_stages(stages: &[Stage]) -> Result<(), TrainError> {
    let bad = |m: &str| Err(TrainError::StageOrderInvalid(format!("{m}: {stages:?}")));
    match stages.first() {
        None => return bad("empty stage list"),
        Some(s) if !s.is_pretrain() => return bad("the first stage must be pt or kpt"),
        _ => {}
    }
    for w in stages.windows(2) {
        if w[1].rank() <= w[0].rank() {
            return bad("stages out of order or repeated");
        }
    }
    if stages.contains(&Stage::Ppo) && !stages.contains(&Stage::Rm) {
        return bad("ppo requires an rm stage");
    }
    Ok(())
}

pub struct PipelineInputs<'a> {
    pub model: &'a ModelState,
    pub vocab: &'a Vocab,
    pub knowledge: &'a [Vec<u32>],
    pub general: &'a [Vec<u32>],
    pub sft_pairs: &'a [DialoguePair],
    pub preferences: &'a [PreferenceTriple],
    pub ppo_prompts: &'a [Vec<u32>],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfigs {
    pub pretrain: TrainConfig,
    pub sft: TrainConfig,
    pub rm: TrainConfig,
    pub ppo: PpoConfig,
    /// Train SFT and PPO through LoRA adapters of this rank (scaling
    /// 2 / rank), merged after each stage. `None` trains full weights.
    pub lora_rank: Option<usize>,
}

impl Default for PipelineConfigs {
    fn default() -> Self {
        Self {
            pretrain: TrainConfig::default(),
            sft: TrainConfig::default(),
            rm: TrainConfig::default(),
            ppo: PpoConfig::default(),
            lora_rank: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: Stage,
    pub checkpoint: Option<PathBuf>,
    pub curve: Curve,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageArtifacts {
    pub records: Vec<StageRecord>,
}

impl StageArtifacts {
    pub fn get(&self, stage: Stage) -> Option<&StageRecord> {
        self.records.iter().find(|r| r.stage == stage)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub policy: ModelState,
    /// Policy snapshot after each stage that changes it.
    pub snapshots: Vec<(Stage, ModelState)>,
    pub reward_model: Option<RewardModel>,
    pub artifacts: StageArtifacts,
    pub ppo_logs: Vec<PpoBatchLog>,
}

pub fn write_curve(path: &Path, header: &str, curve: &Curve) -> Result<(), TrainError> {
    let mut s = format!("step,{header}\n");
    for (step, v) in curve {
        s.push_str(&format!("{step},{v}\n"));
    }
    fs::write(path, s)?;
    Ok(())
}

/// Runs `stages` in order. With `out_dir`, writes `<tag>.ckpt` and
/// `<tag>_curve.csv` after every stage.
pub fn run_pipeline(
    stages: &[Stage],
    inputs: &PipelineInputs<'_>,
    cfgs: &PipelineConfigs,
    out_dir: Option<&Path>,
) -> Result<PipelineOutput, TrainError> {
    validate_stages(stages)?;
    let mut checks = vec![cfgs.pretrain.validate()];
    if stages.contains(&Stage::Sft) {
        checks.push(cfgs.sft.validate());
    }
    if stages.contains(&Stage::Rm) {
        checks.push(cfgs.rm.validate());
    }
    if stages.contains(&Stage::Ppo) {
        checks.push(cfgs.ppo.validate());
    }
    checks.into_iter().collect::<Result<Vec<()>, _>>()?;
    if stages[0] == Stage::Kpt && !(cfgs.pretrain.alpha > 0.0) {
        return Err(TrainError::ConfigInvalid("kpt needs alpha > 0".into()));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }

    let mut policy = inputs.model.clone();
    let mut reward_model = None;
    let mut artifacts = StageArtifacts::default();
    let mut snapshots = Vec::new();
    let mut ppo_logs = Vec::new();
    let adapt = |m: &ModelState| -> Result<ModelState, TrainError> {
        match cfgs.lora_rank {
            Some(r) => m.attach_lora(r, 2.0 / r as f64).map_err(TrainError::model("lora")),
            None => Ok(m.clone()),
        }
    };
    for &stage in stages {
        let curve = match stage {
            Stage::Pt | Stage::Kpt => {
                let cfg = if stage == Stage::Pt {
                    // plain PT: general corpus only
                    let beta = if cfgs.pretrain.beta > 0.0 { cfgs.pretrain.beta } else { 1.0 };
                    TrainConfig { alpha: 0.0, beta, ..cfgs.pretrain.clone() }
                } else {
                    cfgs.pretrain.clone()
                };
                let out = run_pretrain(&policy, inputs.knowledge, inputs.general, &cfg)?;
                policy = out.model;
                out.curve
            }
            Stage::Sft => {
                let out = run_sft(&adapt(&policy)?, inputs.vocab, inputs.sft_pairs, &cfgs.sft)?;
                policy = out.model.merge_lora();
                out.curve
            }
            Stage::Rm => {
                let (rm, curve) = train_reward_model(&policy, inputs.vocab, inputs.preferences, &cfgs.rm)?;
                reward_model = Some(rm);
                curve
            }
            Stage::Ppo => {
                let rm = reward_model.as_ref().expect("validated: rm precedes ppo");
                let out = run_ppo(&adapt(&policy)?, rm, inputs.ppo_prompts, &cfgs.ppo)?;
                policy = out.model.merge_lora();
                ppo_logs = out.logs;
                out.curve
            }
        };
        let checkpoint = match out_dir {
            Some(dir) => {
                let path = dir.join(format!("{}.ckpt", stage.tag()));
                match (stage, &reward_model) {
                    (Stage::Rm, Some(rm)) => rm.save(&path),
                    _ => save_checkpoint(&policy, stage.tag(), &path),
                }
                .map_err(TrainError::model(stage.tag()))?;
                let label = if stage == Stage::Ppo { "mean_reward" } else { "loss" };
                write_curve(&dir.join(format!("{}_curve.csv", stage.tag())), label, &curve)?;
                Some(path)
            }
            None => None,
        };
        if stage != Stage::Rm {
            snapshots.push((stage, policy.clone()));
        }
        artifacts.records.push(StageRecord { stage, checkpoint, curve });
    }
    Ok(PipelineOutput { policy, snapshots, reward_model, artifacts, ppo_logs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_rules() {
        assert!(validate_stages(&[Stage::Kpt]).is_ok());
        assert!(validate_stages(&[Stage::Pt, Stage::Sft, Stage::Rm, Stage::Ppo]).is_ok());
        assert!(validate_stages(&[Stage::Pt, Stage::Rm]).is_ok());
        for bad in [
            vec![Stage::Rm, Stage::Ppo],
            vec![],
            vec![Stage::Pt, Stage::Kpt],
            vec![Stage::Pt, Stage::Sft, Stage::Ppo],
            vec![Stage::Pt, Stage::Rm, Stage::Sft],
            vec![Stage::Pt, Stage::Sft, Stage::Sft],
        ] {
            assert!(matches!(validate_stages(&bad), Err(TrainError::StageOrderInvalid(_))), "{bad:?}");
        }
        for (_, list) in TABLE_STAGE_LISTS {
            assert!(validate_stages(list).is_ok());
        }
    }

    #[test]
    fn parse_stage_list() {
        assert_eq!(Stage::parse_list("kpt, SFT,rm,ppo").unwrap(), vec![Stage::Kpt, Stage::Sft, Stage::Rm, Stage::Ppo]);
        assert!(Stage::parse_list("kpt,rlhf").is_err());
    }
}
