#include "support.hpp"

#include <cstdlib>
#include <fstream>

#include "csrvolsr/config.hpp"
#include "csrvolsr/error.hpp"
#include "csrvolsr/trainer.hpp"

using namespace csrvolsr;

TEST_CASE("defaults match the training protocol") {
  const RunConfig rc;
  const auto tc = rc.train_config();
  CHECK(tc.lr0 == 1e-4);
  CHECK(tc.batch_size == 9);
  CHECK(tc.epochs == 1000);
  CHECK(tc.lr_decay_every == 200);
  CHECK(tc.lr_decay_factor == 0.5);
  CHECK(tc.lambda_k == 0.01);
  CHECK(tc.scale_range.lo == 2.0);
  CHECK(tc.scale_range.hi == 3.0);
  CHECK(tc.adam_beta1 == 0.9);
  CHECK(tc.adam_beta2 == 0.999);
  CHECK(tc.adam_eps == 1e-8);
  CHECK(tc.use_t1);
  CHECK(tc.use_freq_loss);
  CHECK(tc.encoder == EncoderConfig{});
  CHECK(tc.decoder == DecoderConfig{});
  CHECK(rc.get_reals("eval.scales") == std::vector<double>{2.0, 3.0, 4.0, 2.4});
}

TEST_CASE("canonical text round trip") {
  RunConfig rc;
  rc.apply_override("train.lr0=2e-4");
  rc.apply_override("ablation.use_t1 = false");
  rc.set("eval.scales", " 2, 2.4 ");
  const auto text = rc.canonical_text();
  CHECK(text.find("train.lr0 = " + rc.raw("train.lr0") + "\n") != std::string::npos);
  CHECK(rc.get_real("train.lr0") == 2e-4);
  CHECK(text.find("ablation.use_t1 = false\n") != std::string::npos);
  CHECK(text.find("eval.scales = 2,2.4\n") != std::string::npos);
  const auto back = RunConfig::parse(text);
  CHECK(back == rc);
  CHECK(back.canonical_text() == text);

  // Sorted keys, one per line.
  std::string prev;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto key = line.substr(0, line.find(" = "));
    CHECK(key > prev);
    prev = key;
    ++n;
  }
  CHECK(n == config_keys().size());

  const auto parsed = RunConfig::parse("# comment\n\nseed = 42   # trailing\ntrain.epochs=3\n");
  CHECK(parsed.get_int("seed") == 42);
  CHECK(parsed.train_config().epochs == 3);
}

TEST_CASE("rejections") {
  RunConfig rc;
  CHECK_THROWS_WITH_AS(rc.set("train.lr", "1"), doctest::Contains("InvalidConfig"), Error);
  CHECK_THROWS_WITH_AS(rc.set("train.epochs", "ten"), doctest::Contains("InvalidConfig"), Error);
  CHECK_THROWS_WITH_AS(rc.set("train.epochs", "1.5"), doctest::Contains("InvalidConfig"), Error);
  CHECK_THROWS_WITH_AS(rc.set("ablation.use_t1", "maybe"), doctest::Contains("InvalidConfig"), Error);
  CHECK_THROWS_WITH_AS(rc.apply_override("seed"), doctest::Contains("InvalidConfig"), Error);
  CHECK_THROWS_WITH_AS(RunConfig::parse("seed 3\n"), doctest::Contains("line 1"), Error);
  CHECK_THROWS_WITH_AS(RunConfig::load("/nonexistent/cfg.txt"), doctest::Contains("MissingFile"), Error);

  RunConfig bad;
  bad.apply_override("decoder.skip_at=8");
  CHECK_THROWS_WITH_AS(bad.train_config(), doctest::Contains("InvalidConfig"), Error);
  RunConfig narrow;
  narrow.apply_override("train.scale_max=4.5");
  CHECK_THROWS_AS(narrow.train_config(), Error);
}

TEST_CASE("run directory tags and cache directory") {
  RunConfig rc;
  rc.apply_override("paths.run_dir=/tmp/r");
  rc.apply_override("run.name=x");
  CHECK(rc.run_dir() == std::filesystem::path("/tmp/r/x"));
  rc.apply_override("ablation.use_t1=false");
  CHECK(rc.run_dir() == std::filesystem::path("/tmp/r/x-noT1"));
  rc.apply_override("ablation.use_freq_loss=false");
  CHECK(rc.run_dir() == std::filesystem::path("/tmp/r/x-noT1-noLk"));

  RunConfig c;
  ::setenv("CSRVOLSR_CACHE_DIR", "/tmp/cache-env", 1);
  CHECK(c.cache_dir() == std::filesystem::path("/tmp/cache-env"));
  c.apply_override("paths.cache_dir=/tmp/explicit");
  CHECK(c.cache_dir() == std::filesystem::path("/tmp/explicit"));
  ::unsetenv("CSRVOLSR_CACHE_DIR");
  CHECK(RunConfig{}.cache_dir() == std::filesystem::path("cache"));

  testing::TempDir dir("cfg");
  c.save(dir / "c.txt");
  CHECK(RunConfig::load(dir / "c.txt") == c);
}

TEST_CASE("help lists every key") {
  const auto help = config_help();
  for (const auto& k : config_keys()) CHECK(help.find(k.name) != std::string::npos);
}
