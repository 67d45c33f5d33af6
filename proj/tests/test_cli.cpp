#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "helpers.hpp"

#include "odenet/cli.hpp"
#include "odenet/config.hpp"
#include "odenet/error.hpp"
#include "odenet/raster.hpp"

using namespace odenet;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string config_error(std::string_view text) {
    try {
        parse_config_text(text);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("config defaults, ranges and unknown keys") {
    CHECK(parse_config_text("{}") == PipelineConfig{});
    CHECK(config_error(R"({"terrain":{"beta":9}})").find("terrain.beta") != std::string::npos);
    CHECK(config_error(R"({"terrain":{"colour":1}})").find("terrain.colour") != std::string::npos);
    CHECK(config_error(R"({"bogus":1})").find("bogus") != std::string::npos);
    CHECK(config_error(R"({"validation":{"magnitude":"cubic"}})").find("validation.magnitude") != std::string::npos);
    CHECK(config_error("{not json").find("JSON") != std::string::npos);

    const PipelineConfig partial = parse_config_text(R"({"terrain":{"n":512},"train_enhance":{"lr":0.002}})");
    CHECK(partial.terrain.n == 512);
    CHECK(partial.train_enhance.lr == 0.002);
    CHECK(partial.train_interp.lr == PipelineConfig{}.train_interp.lr);
}

TEST_CASE("parse, serialize, parse is a fixed point") {
    for (std::string_view text : {std::string_view("{}"),
                                  std::string_view(R"({"terrain":{"n":256,"beta":2.2},"threads":3,
                                                       "architecture":{"enhance_widths":[8,16]},
                                                       "validation":{"magnitude":"raw"}})")}) {
        const PipelineConfig a = parse_config_text(text);
        const std::string s = serialize_config(a);
        const PipelineConfig b = parse_config_text(s);
        CHECK(b == a);
        CHECK(serialize_config(b) == s);
    }
}

TEST_CASE("the shipped default config matches the built-in defaults") {
    CHECK(parse_config(std::filesystem::path(ODENET_TEST_DATA) / ".." / ".." / "configs" / "default.json") ==
          PipelineConfig{});
}

TEST_CASE("pipeline cross-field checks") {
    PipelineConfig c;
    CHECK_NOTHROW(validate_for_pipeline(c));
    c.terrain.n = 128;
    CHECK_THROWS_AS(validate_for_pipeline(c), Error);
}

TEST_CASE("exit codes") {
    const Run unknown = cli({"no-such-command"});
    CHECK(unknown.code == kExitUsage);
    CHECK(unknown.err.find("unknown subcommand") != std::string::npos);
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"gen-terrain", "--no-such-flag"}).code == kExitUsage);

    const auto dir = testing::temp_dir("cli_codes");
    const Run bad_beta = cli({"gen-terrain", "--n", "64", "--beta", "9", "-o", (dir / "x.pfm").string()});
    CHECK(bad_beta.code == kExitUsage);
    CHECK(bad_beta.err.find("beta") != std::string::npos);

    const Run missing = cli({"score", "--dem", (dir / "missing.pfm").string(), "-o", (dir / "r.csv").string()});
    CHECK(missing.code == kExitData);

    testing::spit(dir / "garbage.pfm", "P5\n1 1\n255\nx");
    CHECK(cli({"score", "--dem", (dir / "garbage.pfm").string(), "-o", (dir / "r.csv").string()}).code == kExitData);
}

TEST_CASE("gen-terrain is reproducible and score writes a report") {
    const auto dir = testing::temp_dir("cli_gen");
    auto gen = [&](const std::string& name) {
        return cli({"gen-terrain", "--n", "512", "--beta", "1.8", "--rms", "150", "--seed", "11", "--threads", "1",
                    "-o", (dir / name).string()});
    };
    REQUIRE(gen("a.pfm").code == kExitOk);
    REQUIRE(gen("b.pfm").code == kExitOk);
    const HeightGrid g = load_height_grid(dir / "a.pfm");
    CHECK(g.width() == 512);
    CHECK(g.height() == 512);
    CHECK(testing::slurp(dir / "a.pfm") == testing::slurp(dir / "b.pfm"));

    const nlohmann::json run = nlohmann::json::parse(testing::slurp(dir / "run.json"));
    CHECK(run.at("command") == "gen-terrain");
    CHECK(run.at("config").at("terrain").at("n") == 512);
    CHECK(run.at("config").at("terrain").at("rms") == 150.0);

    REQUIRE(cli({"score", "--dem", (dir / "a.pfm").string(), "-o", (dir / "report.csv").string()}).code == kExitOk);
    std::istringstream csv(testing::slurp(dir / "report.csv"));
    std::string header, row;
    std::getline(csv, header);
    std::getline(csv, row);
    CHECK(header == "name,c0,c2,score,rmse,max_err,dx,dy");
    CHECK(row.rfind("a,", 0) == 0); // rows are named after the input file
    double c0 = 0, c2 = 0, score = 0;
    char sep;
    std::istringstream fields(row.substr(2));
    fields >> c0 >> sep >> c2 >> sep >> score;
    CHECK(c0 > 0.0);
    CHECK(score == doctest::Approx(c2 / c0).epsilon(1e-6));
}

TEST_CASE("render and validate subcommands") {
    const auto dir = testing::temp_dir("cli_render");
    REQUIRE(cli({"gen-terrain", "--n", "64", "-o", (dir / "dem.pfm").string()}).code == kExitOk);
    REQUIRE(cli({"render", "--dem", (dir / "dem.pfm").string(), "--azimuth", "135", "--elevation", "30", "-o",
                 (dir / "img.pgm").string()})
                .code == kExitOk);
    const ImageGrid img = load_image(dir / "img.pgm");
    CHECK(img.width() == 64);

    const Run v = cli({"validate", "--truth", (dir / "dem.pfm").string(), "--dem", (dir / "dem.pfm").string(), "-o",
                       (dir / "v.csv").string()});
    CHECK(v.code == kExitOk);
    CHECK(testing::slurp(dir / "v.csv").find("name,c0,c2,score,rmse,max_err,dx,dy") == 0);
}
