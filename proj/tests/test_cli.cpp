#include "support.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "csrvolsr/config.hpp"
#include "csrvolsr/nifti.hpp"
#include "csrvolsr/patch_pipeline.hpp"
#include "csrvolsr/phantom.hpp"

using namespace csrvolsr;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args, const fs::path& scratch) {
  const auto log = scratch / "cli.log";
  const std::string cmd = std::string(CSRVOLSR_CLI) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_toy_manifest(const fs::path& root, const std::string& t1_override = {}) {
  std::ofstream m(root / "toy.tsv");
  const char* splits[] = {"train", "val", "test"};
  for (int i = 0; i < 3; ++i) {
    const std::string id = "sub-00" + std::to_string(i);
    const std::string t1 = (i == 1 && !t1_override.empty()) ? t1_override : id + "/t1.nii.gz";
    m << id << "\t" << id << "/dwi.nii.gz\t" << t1 << "\t" << splits[i] << "\n";
  }
}

}  // namespace

TEST_CASE("command line end to end") {
  testing::TempDir root("cli");
  PhantomOptions po;
  po.shape = Shape3::cube(44);
  write_phantom_dataset(root.path(), 3, po, 9);
  write_toy_manifest(root.path());

  SUBCASE("help lists config keys") {
    const auto r = cli("--help", root.path());
    CHECK(r.code == 0);
    for (const auto& k : config_keys()) CHECK(r.out.find(k.name) != std::string::npos);
    for (const char* sub : {"prepare", "train", "infer", "eval"}) CHECK(r.out.find(sub) != std::string::npos);
    CHECK(cli("frobnicate", root.path()).code == 2);
  }

  SUBCASE("prepare is deterministic and validates paths") {
    const auto a = root / "cache_a";
    const auto b = root / "cache_b";
    auto r = cli("prepare --manifest '" + (root / "toy.tsv").string() + "' --out '" + a.string() + "' --seed 4",
                 root.path());
    REQUIRE(r.code == 0);
    CHECK(r.out.find("prepared 3 subjects, 27 patches") != std::string::npos);
    r = cli("prepare --manifest '" + (root / "toy.tsv").string() + "' --out '" + b.string() + "' --seed 4",
            root.path());
    REQUIRE(r.code == 0);
    for (const char* f : {"sub-000.patches", "sub-001.patches", "sub-002.patches", "manifest.tsv"})
      CHECK(slurp(a / f) == slurp(b / f));
    const auto cache = read_patch_cache(a / "sub-000.patches");
    CHECK(cache.patches.size() == 9);
    CHECK(cache.patches[0].size == 40);
    CHECK(cache.patches[0].data.size() == 2u * 40 * 40 * 40);
    CHECK(read_manifest(a / "manifest.tsv").count(Split::test) == 1);

    write_toy_manifest(root.path(), "sub-001/missing_t1.nii.gz");
    r = cli("prepare --manifest '" + (root / "toy.tsv").string() + "' --out '" + (root / "cache_c").string() + "'",
            root.path());
    CHECK(r.code == 2);
    CHECK(r.out.find("missing_t1.nii.gz") != std::string::npos);
    CHECK(r.out.find("line 2") != std::string::npos);
    CHECK(cli("prepare --out x", root.path()).code == 2);
  }

  SUBCASE("train, infer, eval") {
    const auto cache = root / "cache";
    REQUIRE(cli("prepare --manifest '" + (root / "toy.tsv").string() + "' --out '" + cache.string() + "'",
                root.path())
                .code == 0);
    const std::string common = "paths.cache_dir='" + cache.string() + "' paths.run_dir='" + (root / "runs").string() +
                               "' run.name=t encoder.num_blocks=1 encoder.convs_per_block=1 encoder.growth_rate=4 "
                               "encoder.base_channels=4 decoder.hidden_width=16 train.epochs=1 train.val_every=1";
    auto r = cli("train " + common, root.path());
    REQUIRE(r.code == 0);
    const auto run = root / "runs" / "t";
    CHECK(fs::exists(run / "best.ckpt"));
    CHECK(fs::exists(run / "last.ckpt"));
    CHECK(fs::exists(run / "config.txt"));
    CHECK(slurp(run / "train.log").size() > 0);

    CHECK(cli("train train.epochs=zero " + common, root.path()).code == 2);
    CHECK(cli("train bogus.key=1", root.path()).code == 2);
    CHECK(cli("train paths.cache_dir='" + (root / "nowhere").string() + "'", root.path()).code == 2);

    // No-T1 ablation gets its own directory.
    r = cli("train " + common + " ablation.use_t1=false", root.path());
    CHECK(r.code == 0);
    CHECK(fs::exists(root / "runs" / "t-noT1" / "best.ckpt"));

    PhantomOptions small;
    small.shape = Shape3::cube(10);
    write_phantom_subject(root / "lr", make_phantom(small, 3));
    const std::string ck = "--checkpoint '" + (run / "best.ckpt").string() + "'";
    const std::string in = " --in '" + (root / "lr" / "dwi.nii.gz").string() + "' '" + (root / "lr" / "t1.nii.gz").string() + "'";
    r = cli("infer " + ck + in + " --scale 2.4 --out '" + (root / "sr.nii.gz").string() + "' --png '" +
                (root / "sr.png").string() + "'",
            root.path());
    REQUIRE(r.code == 0);
    const Volume sr = load_volume(root / "sr.nii.gz");
    CHECK(sr.shape == Shape3::cube(24));
    CHECK(sr.spacing_mm[0] == doctest::Approx(1.25 / 2.4).epsilon(1e-6));
    CHECK(fs::file_size(root / "sr.png") > 0);

    r = cli("infer " + ck + in + " --target-shape 25,25,25 --out '" + (root / "t.nii").string() + "'", root.path());
    REQUIRE(r.code == 0);
    CHECK(load_volume(root / "t.nii").shape == Shape3::cube(25));

    r = cli("infer " + ck + in + " --scale 1 --out '" + (root / "bad.nii").string() + "'", root.path());
    CHECK(r.code == 2);
    CHECK(r.out.find("scale must exceed 1") != std::string::npos);
    CHECK_FALSE(fs::exists(root / "bad.nii"));

    r = cli("eval --checkpoint '" + (run / "best.ckpt").string() + "' --manifest '" + (cache / "manifest.tsv").string() +
                "' --scales 2,2.4 --out '" + (root / "report").string() + "'",
            root.path());
    REQUIRE(r.code == 0);
    const auto csv = slurp(root / "report" / "report.csv");
    CHECK(csv.find("Tricubic,2,") != std::string::npos);
    CHECK(csv.find("Model,2.4,") != std::string::npos);
    CHECK(r.out.find("2.4x") != std::string::npos);

    r = cli("eval --checkpoint '" + (root / "none.ckpt").string() + "' --manifest '" +
                (cache / "manifest.tsv").string() + "'",
            root.path());
    CHECK(r.code == 2);
  }
}
