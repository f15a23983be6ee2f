#include "mthal/cli.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mthal/error.hpp"
#include "mthal/estimator.hpp"
#include "mthal/io.hpp"
#include "mthal/simulate.hpp"

namespace mthal {

std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int number = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    while (std::getline(in, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(path + ":" + std::to_string(number) + ": expected key=value");
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw UsageError(path + ":" + std::to_string(number) + ": empty key");
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

namespace {

struct DataOptions {
    std::string data;
    std::string parkinsons;
    bool no_subject = false;
    CsvSchema schema;
};

struct ModelOptions {
    std::string method = "mt-hal";
    int max_degree = 3;
    int knots = 50;
    bool task_interaction = true;
    std::size_t column_budget = 2'000'000;
    std::size_t grid_size = 50;
    double grid_ratio = 1e-3;
    double tol = pipeline_solver_defaults().tol;
    std::size_t max_iter = 100'000;
    std::string algorithm = "cd";
    int folds = 5;
    std::string fold_scheme = "auto";
    std::uint64_t seed = 1;
    std::string weights = "uniform";
    unsigned threads = 1;
};

void add_data_options(CLI::App* cmd, DataOptions& d, bool with_parkinsons) {
    cmd->add_option("--data", d.data, "input CSV");
    if (with_parkinsons) {
        cmd->add_option("--parkinsons", d.parkinsons, "Parkinson's telemonitoring CSV (replaces --data)");
        cmd->add_flag("--no-subject-covariate", d.no_subject, "leave the subject number out of the covariates");
    }
    cmd->add_option("--task-col", d.schema.task_column, "task id column")->capture_default_str();
    cmd->add_option("--outcome-col", d.schema.outcome_column, "outcome column")->capture_default_str();
    cmd->add_option("--weight-col", d.schema.weight_column, "observation weight column");
    cmd->add_option("--cluster-col", d.schema.cluster_column, "cluster id column");
    cmd->add_option("--categorical", d.schema.categorical, "columns to one-hot encode")->delimiter(',');
    cmd->add_option("--ignore", d.schema.ignore, "columns to drop")->delimiter(',');
}

void add_model_options(CLI::App* cmd, ModelOptions& m, bool with_method) {
    if (with_method)
        cmd->add_option("--method", m.method, "mt-hal | mt-lasso | mt-l21")
            ->check(CLI::IsMember({"mt-hal", "mt-lasso", "mt-l21"}))
            ->capture_default_str();
    cmd->add_option("--max-degree", m.max_degree, "largest interaction order")->check(CLI::Range(1, 64))->capture_default_str();
    cmd->add_option("--knots", m.knots, "knots per covariate (0: all observed values)")->check(CLI::NonNegativeNumber)->capture_default_str();
    cmd->add_option("--task-interaction", m.task_interaction, "one coefficient per task and basis")->capture_default_str();
    cmd->add_option("--column-budget", m.column_budget, "maximum design columns")->capture_default_str();
    cmd->add_option("--grid-size", m.grid_size, "lambda grid points")->check(CLI::Range(1, 10000))->capture_default_str();
    cmd->add_option("--grid-ratio", m.grid_ratio, "smallest lambda / lambda_max")->check(CLI::Range(1e-12, 0.999999))->capture_default_str();
    cmd->add_option("--tol", m.tol, "KKT tolerance relative to lambda_max")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--max-iter", m.max_iter, "iterations per lambda")->capture_default_str();
    cmd->add_option("--algorithm", m.algorithm, "cd | fista")->check(CLI::IsMember({"cd", "fista"}))->capture_default_str();
    cmd->add_option("--folds", m.folds, "cross-validation folds")->check(CLI::Range(2, 1000))->capture_default_str();
    cmd->add_option("--fold-scheme", m.fold_scheme, "auto | task-balanced | clustered")
        ->check(CLI::IsMember({"auto", "task-balanced", "clustered"}))
        ->capture_default_str();
    cmd->add_option("--seed", m.seed, "random seed")->capture_default_str();
    cmd->add_option("--weights", m.weights, "uniform | task-balanced")
        ->check(CLI::IsMember({"uniform", "task-balanced"}))
        ->capture_default_str();
    cmd->add_option("--threads", m.threads, "worker threads (0: all cores)")->capture_default_str();
}

std::vector<TaskDataset> load_tasks(const DataOptions& d, std::ostream& err) {
    if (!d.parkinsons.empty())
        return load_parkinsons(d.parkinsons, !d.no_subject, [&](const std::string& w) { err << "warning: " << w << '\n'; });
    if (d.data.empty()) throw UsageError("no input data: pass --data");
    return load_csv(d.data, d.schema);
}

EstimatorConfig estimator_config(const ModelOptions& m, bool clusters) {
    EstimatorConfig c = default_estimator_config();
    c.basis.max_degree = m.max_degree;
    c.basis.per_covariate_max = m.knots;
    c.basis.task_interaction = m.task_interaction;
    c.basis.column_budget = m.column_budget;
    c.grid_size = m.grid_size;
    c.grid_ratio = m.grid_ratio;
    c.solver.tol = m.tol;
    c.solver.max_iter = m.max_iter;
    c.solver.algorithm = m.algorithm == "fista" ? SolverAlgorithm::kAcceleratedProximal : SolverAlgorithm::kBlockCoordinate;
    c.folds = m.folds;
    if (m.fold_scheme == "clustered" && !clusters) throw UsageError("clustered folds need a cluster column");
    c.fold_scheme = m.fold_scheme == "clustered" || (m.fold_scheme == "auto" && clusters) ? FoldScheme::kClustered
                                                                                          : FoldScheme::kTaskBalanced;
    c.seed = m.seed;
    c.weights = m.weights == "task-balanced" ? WeightScheme::kTaskBalanced : WeightScheme::kUniform;
    c.threads = m.threads;
    return c;
}

bool any_clusters(const std::vector<TaskDataset>& tasks) {
    for (const auto& t : tasks)
        if (t.cluster_ids) return true;
    return false;
}

std::string task_label(int id, bool parkinsons) {
    if (parkinsons) return id == 1 ? "mUPDRS" : id == 2 ? "tUPDRS" : "task" + std::to_string(id);
    return "task" + std::to_string(id);
}

/// Fits one method on `train` and predicts `rows`.
Vector fit_and_predict(const std::string& method, const StackedDataset& train, const StackedDataset& rows,
                       const EstimatorConfig& config) {
    if (method == "mt-hal") return fit_mthal(train, config).predict(rows);
    const auto kind = method == "mt-lasso" ? BaselineKind::kMtLasso : BaselineKind::kMtL21;
    return fit_baseline(kind, train, config).predict(rows);
}

void write_predictions(std::ostream& os, const StackedDataset& rows, const Vector& pred) {
    os << "row,task,prediction\n";
    char buf[32];
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, pred[static_cast<Eigen::Index>(i)]);
        os << i + 1 << ',' << rows.task_membership[i] << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf))
           << '\n';
    }
}

/// Inserts file values as `--key=value` right after the subcommand name,
/// skipping keys also given on the command line.
std::vector<std::string> merge_config(std::vector<std::string> args) {
    std::string path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty() || args.size() < 2) return args;
    std::vector<std::string> injected;
    for (const auto& [key, value] : read_config_file(path)) {
        const std::string flag = "--" + key;
        bool explicit_flag = false;
        for (std::size_t i = 2; i < args.size(); ++i)
            if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) explicit_flag = true;
        if (!explicit_flag) injected.push_back(flag + "=" + value);
    }
    args.insert(args.begin() + 2, injected.begin(), injected.end());
    return args;
}

} // namespace

int cli_run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-task highly adaptive lasso: fit, predict, simulate, evaluate"};
    app.require_subcommand(1);
    std::string config_path;
    auto config_opt = [&](CLI::App* cmd) { cmd->add_option("--config", config_path, "key=value defaults file"); };

    DataOptions data;
    ModelOptions model;
    std::string model_path, risk_path, out_path, table_path;

    auto* fit = app.add_subcommand("fit", "fit a model with cross-validated lambda");
    config_opt(fit);
    add_data_options(fit, data, true);
    add_model_options(fit, model, true);
    fit->add_option("--model", model_path, "model archive to write")->required();
    fit->add_option("--risk-table", risk_path, "CV risk table to write");

    auto* predict = app.add_subcommand("predict", "predict rows with a saved model");
    config_opt(predict);
    add_data_options(predict, data, true);
    predict->add_option("--model", model_path, "model archive")->required();
    predict->add_option("--out", out_path, "predictions CSV")->required();

    std::vector<std::string> setups{"NHS"};
    std::vector<std::string> methods{"mt-hal", "mt-lasso", "mt-l21"};
    int reps = 20;
    int d = 0, K = 0, test_per_task = 1000;
    std::vector<int> n_per_task;
    double noise_sd = 0.1, noise_coef = 0.3;
    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo comparison on simulated tasks");
    config_opt(simulate);
    add_model_options(simulate, model, false);
    simulate->add_option("--setup", setups, "setups such as NHS,NLS,LHD,HNHS")->delimiter(',')->capture_default_str();
    simulate->add_option("--methods", methods, "methods to compare")
        ->delimiter(',')
        ->check(CLI::IsMember({"mt-hal", "mt-lasso", "mt-l21"}))
        ->capture_default_str();
    simulate->add_option("--reps", reps, "Monte-Carlo replicates")->check(CLI::Range(1, 1000000))->capture_default_str();
    simulate->add_option("--d", d, "covariates per task (0: preset)");
    simulate->add_option("--tasks", K, "number of tasks (0: preset)");
    simulate->add_option("--n-per-task", n_per_task, "training rows per task")->delimiter(',');
    simulate->add_option("--test-per-task", test_per_task, "test rows per task")->capture_default_str();
    simulate->add_option("--noise-sd", noise_sd, "sd of the error term")->capture_default_str();
    simulate->add_option("--noise-coef", noise_coef, "coefficient on the error term")->capture_default_str();
    simulate->add_option("--out", out_path, "tab-delimited report");
    simulate->add_option("--table", table_path, "formatted report (default: stdout)");

    int outer_folds = 10;
    auto* evaluate = app.add_subcommand("evaluate", "cross-validated test MSE per task and overall");
    config_opt(evaluate);
    add_data_options(evaluate, data, true);
    add_model_options(evaluate, model, false);
    evaluate->add_option("--methods", methods, "methods to compare")
        ->delimiter(',')
        ->check(CLI::IsMember({"mt-hal", "mt-lasso", "mt-l21"}))
        ->capture_default_str();
    evaluate->add_option("--outer-folds", outer_folds, "evaluation folds")->check(CLI::Range(2, 1000))->capture_default_str();
    evaluate->add_option("--out", out_path, "tab-delimited MSE table");

    try {
        const auto args = merge_config(raw_args);
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? kExitOk : kExitUsage;
        }

        if (fit->parsed()) {
            const auto tasks = load_tasks(data, err);
            const auto config = estimator_config(model, any_clusters(tasks));
            const auto stacked = stack(tasks, config.weights);
            if (model.method == "mt-hal") {
                const auto m = fit_mthal(stacked, config);
                atomic_write(model_path, [&](std::ostream& os) { save_model(os, m); });
                if (!risk_path.empty()) atomic_write(risk_path, [&](std::ostream& os) { write_risk_table(os, m.cv); });
                out << "mt-hal: lambda " << m.lambda << " (" << m.cv.selected + 1 << "/" << m.cv.grid.size()
                    << "), cv risk " << m.cv.mean_risk[m.cv.selected] << ", " << m.terms.size() << " nonzero of "
                    << m.design_columns << " columns\n";
            } else {
                const auto kind = model.method == "mt-lasso" ? BaselineKind::kMtLasso : BaselineKind::kMtL21;
                const auto m = fit_baseline(kind, stacked, config);
                atomic_write(model_path, [&](std::ostream& os) { save_model(os, m); });
                if (!risk_path.empty()) atomic_write(risk_path, [&](std::ostream& os) { write_risk_table(os, m.cv); });
                out << model.method << ": lambda " << m.lambda << " (" << m.cv.selected + 1 << "/" << m.cv.grid.size()
                    << "), cv risk " << m.cv.mean_risk[m.cv.selected] << '\n';
            }
        } else if (predict->parsed()) {
            std::ifstream in(model_path);
            if (!in) throw DataError("cannot open model archive " + model_path);
            const auto m = load_model(in);
            data.schema.require_outcome = false;
            const auto rows = stack(load_tasks(data, err));
            const auto pred = m.predict(rows);
            atomic_write(out_path, [&](std::ostream& os) { write_predictions(os, rows, pred); });
        } else if (simulate->parsed()) {
            const auto config = estimator_config(model, false);
            std::vector<Method> ms;
            for (const auto& name : methods) {
                if (name == "mt-hal") ms.push_back(mthal_method(config));
                else ms.push_back(baseline_method(name == "mt-lasso" ? BaselineKind::kMtLasso : BaselineKind::kMtL21, config));
            }
            SimReport all;
            for (const auto& s : setups) {
                auto cfg = dgp_preset(s);
                cfg.seed = model.seed;
                if (d > 0) cfg.d = d;
                if (K > 0) {
                    cfg.K = K;
                    if (n_per_task.empty()) cfg.n_per_task.assign(static_cast<std::size_t>(K), 120);
                }
                if (!n_per_task.empty()) cfg.n_per_task = n_per_task;
                cfg.test_per_task = test_per_task;
                cfg.noise_sd = noise_sd;
                cfg.noise_coef = noise_coef;
                auto report = run_mc(cfg, ms, reps, model.threads);
                for (auto& r : report.rows) {
                    for (const auto& e : r.errors) err << "warning: " << s << " " << r.method << " " << e << '\n';
                    all.rows.push_back(std::move(r));
                }
            }
            if (!out_path.empty()) atomic_write(out_path, [&](std::ostream& os) { write_report_tsv(os, all); });
            if (!table_path.empty()) atomic_write(table_path, [&](std::ostream& os) { write_report_table(os, all); });
            else write_report_table(out, all);
        } else if (evaluate->parsed()) {
            const auto tasks = load_tasks(data, err);
            const bool clusters = any_clusters(tasks);
            const auto config = estimator_config(model, clusters);
            const auto stacked = stack(tasks, config.weights);
            const auto folds = make_folds(stacked, outer_folds, clusters ? FoldScheme::kClustered : FoldScheme::kTaskBalanced,
                                          model.seed);
            const bool park = !data.parkinsons.empty();
            std::ostringstream table;
            table << "method";
            for (int id : stacked.task_ids) table << '\t' << task_label(id, park);
            table << "\tOverall\n";
            for (const auto& method : methods) {
                Vector pred(static_cast<Eigen::Index>(stacked.rows()));
                for (int v = 0; v < folds.folds; ++v) {
                    const auto valid_rows = folds.validation_rows(v);
                    const auto train = stacked.subset(folds.training_rows(v));
                    const auto valid = stacked.subset(valid_rows);
                    const Vector p = fit_and_predict(method, train, valid, config);
                    for (std::size_t i = 0; i < valid_rows.size(); ++i)
                        pred[static_cast<Eigen::Index>(valid.row_ids[i])] = p[static_cast<Eigen::Index>(i)];
                }
                table << method;
                for (std::size_t k = 0; k < stacked.num_tasks(); ++k) {
                    const auto lo = static_cast<Eigen::Index>(stacked.row_offsets[k]);
                    const auto nk = static_cast<Eigen::Index>(stacked.row_offsets[k + 1]) - lo;
                    table << '\t'
                          << mse(pred.segment(lo, nk), stacked.outcomes.segment(lo, nk),
                                 Vector(stacked.weights.segment(lo, nk)));
                }
                table << '\t' << mse(pred, stacked.outcomes, stacked.weights) << '\n';
            }
            if (!out_path.empty()) atomic_write(out_path, [&](std::ostream& os) { os << table.str(); });
            out << table.str();
        }
        return kExitOk;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << '\n';
        return kExitNumerical;
    }
}

} // namespace mthal
