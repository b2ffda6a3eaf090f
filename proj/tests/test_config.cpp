#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sr4ir/config.hpp"

using namespace sr4ir;

TEST_SUITE_BEGIN("config");

TEST_CASE("empty config parses to the documented defaults") {
  ExperimentConfig cfg = parse_config_text("");
  finalize_config(cfg);
  CHECK(cfg.dataset.num_classes == 8);
  CHECK(cfg.dataset.image_size == 64);
  CHECK(cfg.dataset.train_count == 2000);
  CHECK(cfg.dataset.test_count == 500);
  CHECK(cfg.dataset.degradation.scale == 4);
  CHECK(cfg.net.sr_channels == 16);
  CHECK(cfg.net.sr_blocks == 4);
  CHECK(cfg.net.feat_channels == 32);
  CHECK(cfg.net.feat_stages == 3);
  CHECK(cfg.train.tdp_warmup_fraction == 0.1);
  CHECK(cfg.train.perceptual_source == PerceptualKind::on_training_alternate);
  CHECK(cfg.train.cqmix.n_patches == 16);
  CHECK(cfg.train.cqmix.p_hr == 0.5);
  CHECK(cfg.train.train_image_set == std::vector<Role>{Role::SR, Role::HR, Role::AUG});
  CHECK(cfg.scenarios == std::vector<ScenarioKind>{ScenarioKind::SR4IR});
  CHECK(cfg.seeds == std::vector<uint64_t>{1});
  // derived fields sync from the dataset
  CHECK(cfg.net.num_classes == cfg.dataset.num_classes);
  CHECK(cfg.net.scale == cfg.dataset.degradation.scale);
}

TEST_CASE("unknown and malformed keys are named in the error") {
  CHECK_THROWS_WITH_AS(parse_config_text("train.lr_rs = 0.1\n"),
                       doctest::Contains("unknown key 'train.lr_rs'"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_config_text("train.epochs = six\n"),
                       doctest::Contains("train.epochs"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_config_text("run.scenarios = SR5IR\n"),
                       doctest::Contains("run.scenarios"), std::runtime_error);
  CHECK_THROWS_WITH_AS(parse_config_text("just a line\n"),
                       doctest::Contains("expected 'key = value'"), std::runtime_error);
}

TEST_CASE("parsing handles comments, blanks and overrides") {
  ExperimentConfig cfg = parse_config_text(
      "# a comment line\n"
      "\n"
      "train.lr_sr = 0.002   # trailing comment\n"
      "dataset.stripe_periods = 9, 5, 12, 3\n"
      "run.scenarios = LR_to_T, SR4IR\n"
      "run.seeds = 1,2,3\n");
  CHECK(cfg.train.lr_sr == 0.002);
  CHECK(cfg.dataset.stripe_periods == std::vector<int>{9, 5, 12, 3});
  CHECK(cfg.scenarios.size() == 2);
  CHECK(cfg.run_matrix().size() == 6);

  apply_override(cfg, "train.lr_sr=0.5");
  CHECK(cfg.train.lr_sr == 0.5);
  CHECK_THROWS(apply_override(cfg, "no_equals_sign"));
}

TEST_CASE("emit -> parse round trip reproduces the config") {
  ExperimentConfig cfg = parse_config_text(
      "dataset.num_classes = 6\n"
      "dataset.image_size = 32\n"
      "dataset.blur_std = 0.75\n"
      "dataset.label_mode = background\n"
      "net.task = segmentation\n"
      "train.lr_task = 0.0125\n"
      "train.perceptual_source = pretrained_task\n"
      "train.train_image_set = SR,HR\n"
      "train.seed = 987654321\n"
      "run.scenarios = S_then_T,T_then_S\n"
      "run.seeds = 7,8\n"
      "output_dir = some/dir\n");
  const std::string emitted = emit_config(cfg);
  ExperimentConfig back = parse_config_text(emitted);
  CHECK(emit_config(back) == emitted);
  CHECK(back.dataset.num_classes == 6);
  CHECK(back.dataset.degradation.blur_std == 0.75);
  CHECK(back.net.task_kind == TaskKind::segmentation);
  CHECK(back.train.perceptual_source == PerceptualKind::pretrained_task);
  CHECK(back.output_dir == "some/dir");
}

TEST_CASE("invariant violations name the offending key") {
  ExperimentConfig cfg;
  cfg.dataset.image_size = 66;  // not divisible by scale 4
  CHECK_THROWS_WITH_AS(finalize_config(cfg), doctest::Contains("image_size"),
                       std::runtime_error);

  ExperimentConfig cfg2;
  cfg2.train.train_image_set = {Role::AUG};
  cfg2.train.cqmix.enabled = false;
  CHECK_THROWS_WITH_AS(finalize_config(cfg2), doctest::Contains("cqmix"), std::runtime_error);

  ExperimentConfig cfg3;
  cfg3.train.tdp_warmup_fraction = 1.5;
  CHECK_THROWS_WITH_AS(finalize_config(cfg3), doctest::Contains("tdp_warmup_fraction"),
                       std::runtime_error);
}

TEST_CASE("config files load from disk") {
  namespace fs = std::filesystem;
  fs::create_directories("test_cfg_out");
  {
    std::ofstream f("test_cfg_out/a.cfg");
    f << "train.epochs = 11\n";
  }
  ExperimentConfig cfg = parse_config_file("test_cfg_out/a.cfg");
  CHECK(cfg.train.epochs == 11);
  CHECK_THROWS(parse_config_file("test_cfg_out/missing.cfg"));
  fs::remove_all("test_cfg_out");
}

TEST_SUITE_END();
