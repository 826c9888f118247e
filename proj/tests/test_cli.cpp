#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "aero/binio.hpp"
#include "aero/cli.hpp"
#include "aero/dataset.hpp"
#include "aero/diffusion.hpp"
#include "aero/plot.hpp"

using namespace aero;
using nlohmann::json;
namespace fs = std::filesystem;

namespace
{

    const fs::path &workRoot()
    {
        static const fs::path root = []
        {
            const fs::path p = fs::temp_directory_path() / "aero_cli_work";
            fs::remove_all(p);
            fs::create_directories(p);
            return p;
        }();
        return root;
    }

    std::string writeConfig(const std::string &name, const json &doc)
    {
        const fs::path p = workRoot() / name;
        std::ofstream os(p);
        os << doc.dump(2) << "\n";
        REQUIRE(os.good());
        return p.string();
    }

    int run(const std::string &command, const std::string &config,
            const std::string &out, long long seed = -1)
    {
        CliOptions opt;
        opt.command = command;
        opt.config_path = config;
        opt.out_dir = (workRoot() / out).string();
        opt.seed = seed;
        return runCommand(opt);
    }

    std::string slurp(const fs::path &p)
    {
        std::ifstream in(p, std::ios::binary);
        REQUIRE(in.good());
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    json readJson(const fs::path &p)
    {
        return json::parse(slurp(p));
    }

    // one micro pipeline shared by the tests below
    struct Pipeline
    {
        std::string ds_dir, tr_dir, sc_dir, gen_dir, post_dir;
        json doc;

        Pipeline()
        {
            ds_dir = (workRoot() / "ds").string();
            tr_dir = (workRoot() / "tr").string();
            sc_dir = (workRoot() / "sc").string();
            gen_dir = (workRoot() / "gen").string();
            post_dir = (workRoot() / "post").string();
            doc["version"] = 1;
            doc["dataset"] = {{"resolution", 4.0},
                              {"augment_angles", json::array()},
                              {"seed", 3}};
            doc["train"] = {{"dataset", ds_dir + "/dataset.bin"},
                            {"steps", 2500},
                            {"batch", 8},
                            {"model",
                             {{"d", 16}, {"layers", 1}, {"heads", 2}, {"t", 30}}},
                            {"seed", 5}};
            doc["scene"] = {{"kind", "empty"},
                            {"bounds_min", {-6.0, -9.0, -5.0}},
                            {"bounds_max", {14.0, 9.0, 6.0}},
                            {"targets", {{5.0, 0.5, 0.0}}},
                            {"voxel", 0.5}};
            doc["generate"] = {{"checkpoint", tr_dir + "/checkpoint.bin"},
                               {"scene", sc_dir + "/scene.json"},
                               {"n_aero", 1},
                               {"seed", 11},
                               {"actions", {"PowerLoop"}},
                               {"guidance", {{"batch", 16}}},
                               {"voxel", 0.5}};
            doc["postprocess"] = {
                {"chain", gen_dir + "/chain.bin"},
                {"scene", sc_dir + "/scene.json"},
                {"voxel", 0.5},
                {"corridor", {{"max_extent", 4.0}}},
                {"quad",
                 {{"v_max", 6.0},
                  {"f_max", 40.0},
                  {"f_min", 1.0},
                  {"omega_max_xy", 85.0},
                  {"omega_max_z", 80.0}}},
                {"weights",
                 {{"rho_t", 1000.0},
                  {"w_att", 8000.0},
                  {"w_v", 1e5},
                  {"w_f", 1e5},
                  {"w_omega_xy", 1e5},
                  {"w_omega_z", 1e5},
                  {"w_safe", 1e5},
                  {"limit_shrink", 0.90}}},
                {"quad_samples", 32},
                {"stage_iters", 500}};
            const std::string cfg = writeConfig("pipeline.json", doc);
            REQUIRE(run("dataset", cfg, "ds") == 0);
            REQUIRE(run("train", cfg, "tr") == 0);
            REQUIRE(run("scene", cfg, "sc") == 0);
            REQUIRE(run("generate", cfg, "gen") == 0);
            REQUIRE(run("postprocess", cfg, "post") == 0);
        }
    };

    const Pipeline &pipeline()
    {
        static const Pipeline p;
        return p;
    }

} // namespace

TEST_CASE("pipeline subcommands write artifacts and manifests")
{
    const Pipeline &p = pipeline();

    CHECK(fs::exists(p.ds_dir + "/dataset.bin"));
    const json dm = readJson(p.ds_dir + "/manifest.json");
    CHECK(dm.at("command") == "dataset");
    CHECK(dm.at("outputs").at("dataset.bin") ==
          hashFileHex(p.ds_dir + "/dataset.bin"));

    CHECK(fs::exists(p.tr_dir + "/checkpoint.bin"));
    CHECK(fs::exists(p.tr_dir + "/loss.csv"));
    const LoadedModel lm = loadCheckpoint(p.tr_dir + "/checkpoint.bin");
    CHECK(lm.use_history);
    CHECK(lm.pos_std.minCoeff() > 0.0);
    const json tm = readJson(p.tr_dir + "/manifest.json");
    CHECK(tm.at("inputs").size() == 1);

    CHECK(fs::exists(p.sc_dir + "/scene.json"));
    CHECK(fs::exists(p.sc_dir + "/sdf.bin"));

    const json cj = readJson(p.gen_dir + "/chain.json");
    CHECK(cj.at("audit").at("ok") == true);
    CHECK(cj.at("batches").size() == 1);
    CHECK(cj.at("batches")[0].at("batch") == 16);
    const Dataset chain = loadDataset(p.gen_dir + "/chain.bin");
    REQUIRE(chain.prims.size() == 1);
    CHECK(chain.prims[0].active_len >= 2);
    CHECK(chain.prims[0].action == ActionLabel::PowerLoop);
}

TEST_CASE("postprocess on a generated chain reports zero violations")
{
    const Pipeline &p = pipeline();
    const json report = readJson(p.post_dir + "/report.json");
    CHECK(report.at("feasibility").at("max_violation").get<double>() <= 1e-3);
    CHECK(report.at("stage1").at("iters").get<int>() >= 1);

    std::ifstream csv(p.post_dir + "/trajectory.csv");
    REQUIRE(csv.good());
    std::string header;
    std::getline(csv, header);
    CHECK(header == "t,px,py,pz,vx,vy,vz,ax,ay,az,ftx,fty,ftz,wx,wy,wz,qw,qx,qy,qz");
    CHECK(fs::exists(p.post_dir + "/corridor.json"));
}

TEST_CASE("rerunning from the manifest reproduces artifacts byte for byte")
{
    const Pipeline &p = pipeline();
    const json manifest = readJson(p.gen_dir + "/manifest.json");
    json doc;
    doc["version"] = 1;
    doc["generate"] = manifest.at("config");
    const std::string cfg = writeConfig("rerun.json", doc);
    REQUIRE(run("generate", cfg, "gen_rerun") == 0);
    const fs::path a = p.gen_dir, b = workRoot() / "gen_rerun";
    CHECK(slurp(a / "chain.bin") == slurp(b / "chain.bin"));
    CHECK(slurp(a / "chain.json") == slurp(b / "chain.json"));
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
}

TEST_CASE("seed override is recorded and changes the sample")
{
    const Pipeline &p = pipeline();
    const std::string cfg = writeConfig("pipeline.json", p.doc);
    REQUIRE(run("generate", cfg, "gen_seed", 12) == 0);
    const fs::path b = workRoot() / "gen_seed";
    const json m = readJson(b / "manifest.json");
    CHECK(m.at("config").at("seed") == 12);
    CHECK(slurp(b / "chain.bin") != slurp(fs::path(p.gen_dir) / "chain.bin"));
}

TEST_CASE("unknown config keys are rejected with a config error")
{
    const Pipeline &p = pipeline();
    json doc;
    doc["version"] = 1;
    doc["generate"] = p.doc.at("generate");
    doc["generate"]["bogus_key"] = 3;
    const std::string cfg = writeConfig("bad_key.json", doc);
    CHECK(run("generate", cfg, "bad_key_out") == 2);
    const json e = readJson(workRoot() / "bad_key_out" / "error.json");
    CHECK(e.at("error").at("kind") == "config");
    CHECK(e.at("error").at("message").get<std::string>().find("bogus_key") !=
          std::string::npos);
}

TEST_CASE("missing inputs produce machine-readable io errors")
{
    const Pipeline &p = pipeline();
    json doc;
    doc["version"] = 1;
    doc["postprocess"] = {{"chain", (workRoot() / "nope.bin").string()},
                          {"scene", p.sc_dir + "/scene.json"}};
    const std::string cfg = writeConfig("missing.json", doc);
    CHECK(run("postprocess", cfg, "missing_out") == 3);
    const json e = readJson(workRoot() / "missing_out" / "error.json");
    CHECK(e.at("error").at("kind") == "io");
}

TEST_CASE("micro ablation sweep emits a well-formed report")
{
    const Pipeline &p = pipeline();
    json doc;
    doc["version"] = 1;
    doc["ablate"] = {{"checkpoint", p.tr_dir + "/checkpoint.bin"},
                     {"scenario", {{"kind", "forest"}, {"voxel", 0.4}}},
                     {"seeds", {0, 1}},
                     {"n_aero", {1, 2}},
                     {"chains", 2},
                     {"guidance", {{"batch", 16}}}};
    const std::string cfg = writeConfig("ablate.json", doc);
    REQUIRE(run("ablate", cfg, "ab") == 0);

    const json report = readJson(workRoot() / "ab" / "report.json");
    REQUIRE(report.at("cells").size() == 6);
    for (const json &cell : report.at("cells"))
    {
        REQUIRE(cell.at("rates").size() == 2);
        for (const json &r : cell.at("rates"))
        {
            CHECK(r.get<double>() >= 0.0);
            CHECK(r.get<double>() <= 100.0);
        }
        const double med = cell.at("median").get<double>();
        CHECK(med >= 0.0);
        CHECK(med <= 100.0);
        CHECK(cell.at("half_range").get<double>() >= 0.0);
    }

    std::ifstream table(workRoot() / "ab" / "table.csv");
    REQUIRE(table.good());
    std::string line;
    int lines = 0;
    while (std::getline(table, line))
    {
        if (!line.empty())
        {
            ++lines;
        }
    }
    CHECK(lines == 1 + 6);
}

TEST_CASE("quantiles follow the linear interpolation definition")
{
    CHECK(quantileLinear({1.0, 2.0, 3.0, 4.0}, 0.25) == doctest::Approx(1.75));
    CHECK(quantileLinear({1.0, 2.0, 3.0, 4.0}, 0.5) == doctest::Approx(2.5));
    CHECK(quantileLinear({4.0, 1.0, 3.0, 2.0}, 0.75) == doctest::Approx(3.25));
    CHECK(quantileLinear({5.0}, 0.9) == doctest::Approx(5.0));
    CHECK(quantileLinear({1.0, 9.0}, 0.1) == doctest::Approx(1.8));
    CHECK(quantileLinear({2.0, 7.0, 11.0}, 0.0) == doctest::Approx(2.0));
    CHECK(quantileLinear({2.0, 7.0, 11.0}, 1.0) == doctest::Approx(11.0));

    const BoxStats b = boxStats({6.0, 7.0, 15.0, 36.0, 39.0, 40.0, 41.0, 42.0,
                                 43.0, 47.0, 49.0});
    CHECK(b.lo == doctest::Approx(6.0));
    CHECK(b.q1 == doctest::Approx(25.5));
    CHECK(b.med == doctest::Approx(40.0));
    CHECK(b.q3 == doctest::Approx(42.5));
    CHECK(b.hi == doctest::Approx(49.0));

    CHECK_THROWS_AS(quantileLinear({}, 0.5), ValidationError);
    CHECK_THROWS_AS(quantileLinear({1.0}, -0.1), ConfigError);
    CHECK_THROWS_AS(quantileLinear({1.0}, 1.1), ConfigError);
}

TEST_CASE("plot subcommands render deterministic svg")
{
    const Pipeline &p = pipeline();
    json doc;
    doc["version"] = 1;
    doc["plot"] = {{"kind", "profile"},
                   {"input", p.post_dir + "/trajectory.csv"}};
    std::string cfg = writeConfig("plot_profile.json", doc);
    REQUIRE(run("plot", cfg, "pl_profile") == 0);
    const std::string svg1 = slurp(workRoot() / "pl_profile" / "profile.svg");
    CHECK(svg1.rfind("<svg", 0) == 0);
    CHECK(svg1.find("polyline") != std::string::npos);
    REQUIRE(run("plot", cfg, "pl_profile2") == 0);
    CHECK(slurp(workRoot() / "pl_profile2" / "profile.svg") == svg1);

    doc["plot"] = {{"kind", "topdown"},
                   {"input", p.gen_dir + "/chain.bin"},
                   {"scene", p.sc_dir + "/scene.json"}};
    cfg = writeConfig("plot_topdown.json", doc);
    REQUIRE(run("plot", cfg, "pl_topdown") == 0);
    CHECK(slurp(workRoot() / "pl_topdown" / "topdown.svg").find("circle") !=
          std::string::npos);

    json box;
    box["ylabel"] = "terminal error [m]";
    box["groups"] = {{{"label", "IDS"}, {"values", {0.3, 0.5, 0.2, 0.9, 0.4}}},
                     {{"label", "OODS"}, {"values", {1.1, 0.8, 1.7, 0.6}}}};
    const fs::path box_path = workRoot() / "box_data.json";
    {
        std::ofstream os(box_path);
        os << box.dump(2);
    }
    doc["plot"] = {{"kind", "box"}, {"input", box_path.string()}};
    cfg = writeConfig("plot_box.json", doc);
    REQUIRE(run("plot", cfg, "pl_box") == 0);
    CHECK(slurp(workRoot() / "pl_box" / "box.svg").find("rect") !=
          std::string::npos);

    doc["plot"] = {{"kind", "pie"}, {"input", box_path.string()}};
    cfg = writeConfig("plot_pie.json", doc);
    CHECK(run("plot", cfg, "pl_pie") == 2);
}

TEST_CASE("aerobatch binary handles the documented surface")
{
    const Pipeline &p = pipeline();
    const std::string cfg = writeConfig("pipeline.json", p.doc);
    const std::string out = (workRoot() / "bin_gen").string();
    const std::string cmd = std::string(AEROBATCH_BIN) + " generate --config " +
                            cfg + " --out " + out + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    CHECK(WEXITSTATUS(rc) == 0);
    CHECK(fs::exists(fs::path(out) / "chain.bin"));
    CHECK(fs::exists(fs::path(out) / "manifest.json"));

    const int bad = std::system(
        (std::string(AEROBATCH_BIN) + " frobnicate > /dev/null 2>&1").c_str());
    REQUIRE(bad != -1);
    CHECK(WEXITSTATUS(bad) != 0);
}
