#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <unistd.h>

#include "mthal/cli.hpp"
#include "mthal/cv.hpp"
#include "mthal/error.hpp"
#include "mthal/estimator.hpp"
#include "mthal/io.hpp"

using namespace mthal;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory removed on scope exit.
struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("mthal_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

CsvTable parse(const std::string& text) {
    std::istringstream is(text);
    return read_csv(is);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream(path) << text;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "mthal");
    std::ostringstream out, err;
    const int code = cli_run(args, out, err);
    return {code, out.str(), err.str()};
}

/// Two tasks, two covariates, a step signal.
std::string toy_csv(int n_per_task = 30) {
    std::ostringstream os;
    os.precision(17);
    os << "task,x1,x2,y\n";
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    for (int k = 1; k <= 2; ++k)
        for (int i = 0; i < n_per_task; ++i) {
            const double x1 = normal(rng), x2 = normal(rng);
            os << k << ',' << x1 << ',' << x2 << ',' << (x1 > 0 ? 2.0 * k : 0.0) + 0.1 * normal(rng) << '\n';
        }
    return os.str();
}

/// Synthetic file in the Parkinson's telemonitoring layout.
std::string parkinsons_csv(int subjects, int per_subject) {
    std::ostringstream os;
    os.precision(10);
    os << "subject#,age,sex,test_time,motor_UPDRS,total_UPDRS";
    for (const auto& v : parkinsons_voice_measures()) os << ',' << v;
    os << '\n';
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u;
    for (int s = 1; s <= subjects; ++s)
        for (int r = 0; r < per_subject; ++r) {
            const double motor = 10 + s * 0.5 + u(rng);
            os << s << ',' << 50 + s % 20 << ',' << s % 2 << ',' << r * 7.0 << ',' << motor << ',' << motor * 1.3;
            for (std::size_t v = 0; v < parkinsons_voice_measures().size(); ++v) os << ',' << u(rng);
            os << '\n';
        }
    return os.str();
}

} // namespace

TEST_CASE("csv quoting and line endings") {
    const auto t = parse("a,b,c\r\n1,\"x,y\",\"say \"\"hi\"\"\"\r\n\r\n2,\"multi\nline\",3\n");
    CHECK(t.header == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "x,y");
    CHECK(t.rows[0][2] == "say \"hi\"");
    CHECK(t.rows[1][1] == "multi\nline");
    CHECK(csv_quote("plain") == "plain");
    CHECK(csv_quote("a,b") == "\"a,b\"");
    CHECK(csv_quote("q\"") == "\"q\"\"\"");

    std::ostringstream os;
    write_csv(os, t);
    CHECK(parse(os.str()).rows == t.rows);
}

TEST_CASE("csv structural errors") {
    CHECK_THROWS_AS(parse(""), DataError);
    CHECK_THROWS_AS(parse("a,b\n1,2,3\n"), DataError);
    CHECK_THROWS_AS(parse("a,b\n\"open,2\n"), DataError);
    CHECK_THROWS_AS(parse("a,b\n1,2\n").column("z"), DataError);
}

TEST_CASE("strict number parsing") {
    CHECK(parse_number("1.5") == 1.5);
    CHECK(parse_number(" -2e3 ") == -2000.0);
    CHECK(parse_number("+4") == 4.0);
    CHECK_FALSE(parse_number("1.5x"));
    CHECK_FALSE(parse_number(""));
    CHECK_FALSE(parse_number("nan"));
    CHECK_FALSE(parse_number("inf"));
}

TEST_CASE("tasks are partitioned by the task column") {
    const auto tasks = tasks_from_csv(parse("task,x,y\n1,0.5,1\n1,0.7,2\n2,0.1,3\n2,0.2,4\n2,0.3,5\n"), {});
    REQUIRE(tasks.size() == 2);
    CHECK(tasks[0].task_id == 1);
    CHECK(tasks[0].covariates.rows() == 2);
    CHECK(tasks[1].covariates.rows() == 3);
    CHECK(tasks[1].outcomes[2] == 5.0);
    CHECK(tasks[0].covariate_names == std::vector<std::string>{"x"});
}

TEST_CASE("unparseable outcome names its row and column") {
    const auto table = parse("task,x,y\n1,1,1\n1,2,2\n1,3,oops\n");
    try {
        tasks_from_csv(table, {});
        FAIL("expected a data error");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("column \"y\"") != std::string::npos);
    }
    CHECK_THROWS_AS(tasks_from_csv(parse("task,x\n1,2\n"), {}), DataError);
    CHECK_THROWS_AS(tasks_from_csv(parse("x,y\n1,2\n"), {}), DataError);
}

TEST_CASE("csv round trip keeps full precision") {
    const auto tasks = tasks_from_csv(parse(toy_csv(5)), {});
    std::ostringstream os;
    write_csv(os, tasks_to_csv(tasks));
    const auto back = tasks_from_csv(parse(os.str()), {});
    REQUIRE(back.size() == tasks.size());
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        CHECK(back[k].covariates == tasks[k].covariates);
        CHECK(back[k].outcomes == tasks[k].outcomes);
    }
    const double tricky = 0.1 + 0.2;
    TaskDataset t;
    t.task_id = 3;
    t.covariates = Eigen::MatrixXd::Constant(1, 1, tricky);
    t.outcomes = Eigen::VectorXd::Constant(1, 1.0 / 3.0);
    t.covariate_names = {"x"};
    std::ostringstream os2;
    write_csv(os2, tasks_to_csv({t}));
    const auto again = tasks_from_csv(parse(os2.str()), {});
    CHECK(again[0].covariates(0, 0) == tricky);
    CHECK(again[0].outcomes[0] == 1.0 / 3.0);
}

TEST_CASE("schema: categorical, ignored, weights and clusters") {
    CsvSchema schema;
    schema.categorical = {"color"};
    schema.ignore = {"note"};
    schema.weight_column = "w";
    schema.cluster_column = "id";
    const auto tasks = tasks_from_csv(
        parse("task,color,note,x,w,id,y\n1,red,a,1,2,10,0\n1,blue,b,2,1,10,1\n1,red,c,3,1,11,2\n"), schema);
    REQUIRE(tasks.size() == 1);
    CHECK(tasks[0].covariate_names == std::vector<std::string>{"color=blue", "color=red", "x"});
    CHECK(tasks[0].covariates(0, 0) == 0.0);
    CHECK(tasks[0].covariates(1, 0) == 1.0);
    CHECK(tasks[0].covariates(2, 1) == 1.0);
    CHECK((*tasks[0].weights)[0] == 2.0);
    CHECK(*tasks[0].cluster_ids == std::vector<std::int64_t>{10, 10, 11});
}

TEST_CASE("parkinsons layout") {
    const auto table = parse(parkinsons_csv(42, 5));
    std::vector<std::string> warnings;
    const auto tasks = parkinsons_from_csv(table, true, [&](const std::string& w) { warnings.push_back(w); });
    REQUIRE(tasks.size() == 2);
    CHECK(warnings.size() == 1);
    CHECK(tasks[0].covariates.rows() == 210);
    CHECK(tasks[0].covariate_names.size() == 19);
    CHECK(tasks[0].covariate_names.back() == "subject");
    CHECK(tasks[1].outcomes[0] == doctest::Approx(tasks[0].outcomes[0] * 1.3));
    const auto without = parkinsons_from_csv(table, false);
    CHECK(without[0].covariate_names.size() == 18);

    const auto s = stack(tasks);
    CHECK(s.rows() == 420);
    CHECK(std::set<std::int64_t>(s.cluster_ids.begin(), s.cluster_ids.end()).size() == 42);
    const auto folds = make_folds(s, 10, FoldScheme::kClustered, 1);
    std::map<std::int64_t, std::set<int>> where;
    for (std::size_t i = 0; i < s.rows(); ++i) where[s.cluster_ids[i]].insert(folds.fold_of_row[i]);
    for (const auto& [id, f] : where) CHECK(f.size() == 1);

    CHECK_THROWS_AS(parkinsons_from_csv(parse("a,b\n1,2\n")), DataError);
}

TEST_CASE("atomic writes leave the target untouched on failure") {
    TempDir dir;
    const auto target = dir.file("out.txt");
    atomic_write(target, [](std::ostream& os) { os << "first\n"; });
    CHECK(read_text(target) == "first\n");
    CHECK_THROWS(atomic_write(target, [](std::ostream& os) {
        os << "partial";
        throw NumericalError("boom");
    }));
    CHECK(read_text(target) == "first\n");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path)) ++entries;
    CHECK(entries == 1);
}

TEST_CASE("cli exit codes") {
    TempDir dir;
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"bogus"}).code == kExitUsage);
    CHECK(run({"fit", "--data", dir.file("missing.csv"), "--model", dir.file("m.json")}).code == kExitData);
    write_text(dir.file("bad.csv"), "task,x,y\n1,1,1\n1,2,zz\n");
    const auto bad = run({"fit", "--data", dir.file("bad.csv"), "--model", dir.file("m.json")});
    CHECK(bad.code == kExitData);
    CHECK(bad.err.find("row 2") != std::string::npos);
    CHECK_FALSE(fs::exists(dir.file("m.json")));
    CHECK(run({"fit", "--data", dir.file("bad.csv"), "--model", dir.file("m.json"), "--folds", "1"}).code == kExitUsage);
    CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("fit then predict reproduces in-sample predictions") {
    TempDir dir;
    write_text(dir.file("train.csv"), toy_csv());
    for (const std::string method : {"mt-hal", "mt-lasso", "mt-l21"}) {
        const auto model_path = dir.file(method + ".json");
        const auto fit = run({"fit", "--data", dir.file("train.csv"), "--model", model_path, "--method", method,
                              "--risk-table", dir.file(method + ".risk"), "--grid-size", "15", "--knots", "8"});
        REQUIRE_MESSAGE(fit.code == kExitOk, fit.err);
        CHECK(read_text(dir.file(method + ".risk")).rfind("lambda\tmean_risk", 0) == 0);
        const auto pred = run({"predict", "--data", dir.file("train.csv"), "--model", model_path, "--out",
                               dir.file(method + ".pred")});
        REQUIRE_MESSAGE(pred.code == kExitOk, pred.err);

        std::ifstream in(model_path);
        const auto model = load_model(in);
        const auto rows = stack(load_csv(dir.file("train.csv"), {}));
        const auto expect = model.predict(rows);
        const auto table = read_csv_file(dir.file(method + ".pred"));
        CHECK(table.header == std::vector<std::string>{"row", "task", "prediction"});
        REQUIRE(table.rows.size() == rows.rows());
        for (std::size_t i = 0; i < rows.rows(); ++i)
            CHECK(*parse_number(table.rows[i][2]) == expect[static_cast<Eigen::Index>(i)]);
    }
}

TEST_CASE("predict accepts files without an outcome column") {
    TempDir dir;
    write_text(dir.file("train.csv"), toy_csv());
    REQUIRE(run({"fit", "--data", dir.file("train.csv"), "--model", dir.file("m.json"), "--grid-size", "10"}).code == kExitOk);
    write_text(dir.file("new.csv"), "task,x1,x2\n2,0.5,0.1\n1,-3,0\n");
    const auto r = run({"predict", "--data", dir.file("new.csv"), "--model", dir.file("m.json"), "--out", dir.file("p.csv")});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
    CHECK(read_csv_file(dir.file("p.csv")).rows.size() == 2);
    write_text(dir.file("alien.csv"), "task,x1,x2\n7,0.5,0.1\n");
    CHECK(run({"predict", "--data", dir.file("alien.csv"), "--model", dir.file("m.json"), "--out", dir.file("q.csv")}).code ==
          kExitData);
    CHECK_FALSE(fs::exists(dir.file("q.csv")));
}

TEST_CASE("config file supplies defaults that flags override") {
    TempDir dir;
    write_text(dir.file("cfg.txt"), "# comment\nreps = 1\nsetup = LHS\nmethods = mt-lasso\ntest-per-task = 20\n\n");
    const auto cfg = read_config_file(dir.file("cfg.txt"));
    CHECK(cfg.at("reps") == "1");
    CHECK(cfg.at("setup") == "LHS");

    const auto a = run({"simulate", "--config", dir.file("cfg.txt"), "--n-per-task", "20,20,20,20,20"});
    REQUIRE_MESSAGE(a.code == kExitOk, a.err);
    CHECK(a.out.find("LHS") != std::string::npos);
    const auto b = run({"simulate", "--config", dir.file("cfg.txt"), "--setup", "NHS", "--n-per-task", "20,20,20,20,20"});
    REQUIRE_MESSAGE(b.code == kExitOk, b.err);
    CHECK(b.out.find("NHS") != std::string::npos);
    CHECK(b.out.find("LHS") == std::string::npos);

    write_text(dir.file("broken.txt"), "no equals sign here\n");
    CHECK(run({"simulate", "--config", dir.file("broken.txt")}).code == kExitUsage);
}

TEST_CASE("simulate writes the report table") {
    TempDir dir;
    const auto r = run({"simulate", "--setup", "NHS", "--reps", "1", "--methods", "mt-lasso,mt-l21", "--n-per-task",
                        "20,20,20,20,20", "--test-per-task", "20", "--out", dir.file("r.tsv"), "--table",
                        dir.file("r.txt")});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
    const auto table = read_text(dir.file("r.txt"));
    std::istringstream is(table);
    std::string header;
    std::getline(is, header);
    std::istringstream hs(header);
    std::vector<std::string> words;
    for (std::string w; hs >> w;) words.push_back(w);
    CHECK(words == std::vector<std::string>{"Setup", "Method", "MSE", "Prec", "%", "Accu", "%"});
    CHECK(table.find("MT-lasso") != std::string::npos);
    CHECK(read_text(dir.file("r.tsv")).find("NHS\tMT-L21") != std::string::npos);
}

TEST_CASE("evaluate reports per-task and overall error") {
    TempDir dir;
    write_text(dir.file("park.csv"), parkinsons_csv(12, 6));
    const auto r = run({"evaluate", "--parkinsons", dir.file("park.csv"), "--methods", "mt-lasso", "--outer-folds", "3",
                        "--folds", "3", "--grid-size", "8", "--out", dir.file("e.tsv")});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
    const auto text = read_text(dir.file("e.tsv"));
    CHECK(text.rfind("method\tmUPDRS\ttUPDRS\tOverall\n", 0) == 0);
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    std::getline(is, line);
    std::istringstream ls(line);
    std::string name;
    double a = 0, b = 0, c = 0;
    ls >> name >> a >> b >> c;
    CHECK(name == "mt-lasso");
    CHECK(c == doctest::Approx((a + b) / 2.0));
}
