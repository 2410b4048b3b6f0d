#include <doctest.h>

#include <json.hpp>

#include <algorithm>

#include "cli.hpp"
#include "dpq/codebook.hpp"
#include "dpq/decoder.hpp"
#include "dpq/binary_io.hpp"
#include "dpq/descriptor_store.hpp"
#include "dpq/trainer.hpp"
#include "helpers.hpp"

using namespace dpq;
using nlohmann::json;

namespace {

int run(std::vector<std::string> args) { return cli::run(args); }

std::string slurp(const std::string& path) {
  const auto b = io::read_file(path);
  return {b.begin(), b.end()};
}

// Small descriptor set plus a 4x8 codebook fitted through the CLI.
struct Fixture {
  test::TempDir dir{"cli"};
  std::string data = dir.file("d.dsc");
  std::string cbk = dir.file("c.cbk");

  Fixture() {
    REQUIRE(run({"synth", "--clusters", "4", "--per-cluster", "30", "--dim", "16", "--seed", "3", "--out", data}) == 0);
    REQUIRE(run({"fit", "--in", data, "--M", "4", "--K", "8", "--iters", "5", "--seed", "3", "--out", cbk}) == 0);
  }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("centroid inputs roundtrip through quantize and dequantize") {
    Fixture f;
    const auto cb = load_codebook(f.cbk);
    Rng rng(4);
    Matrix x(50, cb.dim());
    for (std::size_t i = 0; i < 50; ++i)
      for (std::size_t s = 0; s < cb.M; ++s) {
        const auto k = rng.below(cb.K);
        for (std::size_t j = 0; j < cb.sub_dim; ++j) x(i, s * cb.sub_dim + j) = cb.centroids[s](k, j);
      }
    const std::string in = f.dir.file("centroids.dsc"), idx = f.dir.file("c.idx"), back = f.dir.file("back.dsc");
    save_descriptors(DescriptorSet::from_matrix(x), in);
    REQUIRE(run({"quantize", "--in", in, "--codebook", f.cbk, "--out", idx}) == 0);
    REQUIRE(run({"dequantize", "--in", idx, "--codebook", f.cbk, "--out", back}) == 0);
    const auto y = load_descriptors(back);
    REQUIRE(y.descriptors.same_shape(x));
    CHECK(std::equal(x.values().begin(), x.values().end(), y.descriptors.values().begin()));
  }

  TEST_CASE("budget reports alpha and writes json") {
    test::TempDir dir("cli_budget");
    const std::string out = dir.file("b.json");
    REQUIRE(run({"budget", "--bytes", "4000000", "--n", "1000000", "--m", "4", "--k", "256", "--out", out}) == 0);
    const auto j = json::parse(slurp(out));
    CHECK(j["alpha"].get<double>() == 1.0);
    CHECK(j["selected_count"].get<std::uint64_t>() == 1000000);
    REQUIRE(run({"budget", "--bytes", "1000000", "--n", "1000000", "--m", "4", "--k", "256", "--out", out}) == 0);
    CHECK(json::parse(slurp(out))["alpha"].get<double>() == 0.25);
  }

  TEST_CASE("exit codes are distinct per failure class") {
    test::TempDir dir("cli_exit");
    CHECK(run({"budget", "--bytes", "10", "--n", "5", "--bogus", "--out", dir.file("b.json")}) == cli::kUsage);
    CHECK(run({}) == cli::kUsage);
    CHECK(run({"quantize", "--in", dir.file("missing.dsc"), "--codebook", dir.file("missing.cbk"), "--out",
               dir.file("x.idx")}) == cli::kIo);
    CHECK(run({"budget", "--bytes", "100", "--n", "5", "--overhead", "200", "--out", dir.file("b.json")}) ==
          cli::kInfeasible);
    const std::string cfg = dir.file("bad.cfg");
    io::write_text(cfg, "no_such_key=1\n");
    save_descriptors(synth_descriptors(2, 10, 8, 0.1, 1), dir.file("d.dsc"));
    CHECK(run({"train", "--in", dir.file("d.dsc"), "--config", cfg, "--out", dir.file("t")}) == cli::kConfig);
    io::write_text(dir.file("junk.dsc"), "not a descriptor file");
    CHECK(run({"fit", "--in", dir.file("junk.dsc"), "--out", dir.file("c.cbk")}) == cli::kFormat);
  }

  TEST_CASE("manifest records command, seed, config, inputs, outputs") {
    Fixture f;
    const auto m = json::parse(slurp(f.cbk + ".manifest.json"));
    CHECK(m["command"] == "fit");
    CHECK(m["version"] == cli::kVersion);
    CHECK(m["seed"].get<std::uint64_t>() == 3);
    CHECK(m["config"]["M"] == "4");
    CHECK(m["config"]["K"] == "8");
    CHECK(m["inputs"][f.data] == io::to_hex(io::sha256(io::read_file(f.data))));
    REQUIRE(m["outputs"].size() == 1);
    CHECK(m["outputs"][0]["path"] == f.cbk);
    CHECK(m["outputs"][0]["sha256"] == io::to_hex(io::sha256(io::read_file(f.cbk))));
    CHECK_FALSE(m.contains("wall_time_s"));

    REQUIRE(run({"fit", "--in", f.data, "--M", "4", "--K", "8", "--iters", "5", "--seed", "3", "--out", f.cbk,
                 "--record-wall-time"}) == 0);
    CHECK(json::parse(slurp(f.cbk + ".manifest.json")).contains("wall_time_s"));
  }

  TEST_CASE("flags override the config file, and the seed comes from --seed") {
    Fixture f;
    const std::string cfg = f.dir.file("t.cfg");
    io::write_text(cfg, "# small run\nepochs=1\nbatch_size=40\nM=4\nK=8\nhidden=16\nkmeans_iters=3\nseed=99\n");
    const std::string out = f.dir.file("t");
    REQUIRE(run({"train", "--in", f.data, "--config", cfg, "--hidden", "8", "--seed", "5", "--out", out}) == 0);
    const auto m = json::parse(slurp(out + ".manifest.json"));
    CHECK(m["config"]["hidden"] == "8");
    CHECK(m["config"]["batch_size"] == "40");
    CHECK(m["config"]["epochs"] == "1");
    CHECK(m["seed"].get<std::uint64_t>() == 5);
    CHECK(m["inputs"].contains(cfg));
    CHECK(load_decoder(out + ".dec").H == 8);
    CHECK(load_codebook(out + ".cbk").K == 8);
  }

  TEST_CASE("reruns are byte-identical") {
    Fixture f;
    const std::string out = f.dir.file("t");
    const std::vector<std::string> train = {"train", "--in", f.data, "--epochs", "1", "--batch_size", "40", "--M",
                                            "4", "--K", "8", "--hidden", "16", "--kmeans_iters", "3", "--seed", "7",
                                            "--out", out};
    REQUIRE(run(train) == 0);
    std::vector<std::string> first;
    for (const char* ext : {".cbk", ".dec", ".rpt", ".manifest.json"}) first.push_back(slurp(out + ext));
    REQUIRE(run(train) == 0);
    std::size_t i = 0;
    for (const char* ext : {".cbk", ".dec", ".rpt", ".manifest.json"}) CHECK(slurp(out + ext) == first[i++]);

    const std::string scene = f.dir.file("s.scn"), sel = f.dir.file("sel");
    REQUIRE(run({"synth", "--kind", "scene", "--points", "120", "--clusters", "4", "--seed", "2", "--out", scene}) == 0);
    REQUIRE(run({"compress-map", "--in", scene, "--alpha", "0.25", "--out", sel}) == 0);
    const auto idx = slurp(sel + ".idx");
    const auto summary = json::parse(slurp(sel + ".summary.json"));
    CHECK(summary["selected_count"].get<std::size_t>() == 30);
    REQUIRE(run({"compress-map", "--in", scene, "--alpha", "0.25", "--out", sel}) == 0);
    CHECK(slurp(sel + ".idx") == idx);
  }

  TEST_CASE("eval and finetune-lora produce their outputs") {
    Fixture f;
    const std::string t = f.dir.file("t"), l = f.dir.file("l"), ev = f.dir.file("ev.tsv");
    REQUIRE(run({"train", "--in", f.data, "--epochs", "1", "--batch_size", "40", "--M", "4", "--K", "8", "--hidden",
                 "16", "--kmeans_iters", "3", "--out", t}) == 0);
    REQUIRE(run({"finetune-lora", "--in", f.data, "--codebook", t + ".cbk", "--decoder", t + ".dec", "--epochs", "1",
                 "--batch_size", "40", "--lora_rank", "2", "--out", l}) == 0);
    const auto delta = io::read_file(l + ".lra");
    CHECK(delta.size() == 20 + 4 * 2 * (16 + 16) * 2);
    REQUIRE(run({"eval", "--in", f.data, "--codebook", t + ".cbk", "--decoder", l + ".dec", "--triplets", "500",
                 "--out", ev}) == 0);
    const auto table = slurp(ev);
    CHECK(table.rfind("method\t", 0) == 0);
    CHECK(std::count(table.begin(), table.end(), '\n') == 5);
    CHECK(table.find("(symmetric)") != std::string::npos);
  }
}
