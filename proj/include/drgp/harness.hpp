#pragma once

#include "drgp/narx.hpp"
#include "drgp/predictor.hpp"
#include "drgp/trainer.hpp"

#include <string>

namespace drgp {

struct ParseError : Error {
    using Error::Error;
};

// Numeric CSV with a header row. The output column defaults to the last one.
Dataset load_csv(const std::string& path, int output_col = -1);
Dataset parse_csv(const std::string& text, int output_col = -1, const std::string& source = "<string>");
void write_csv(const std::string& path, const Dataset& d);

std::string to_string(NormMode m);
NormMode parse_norm_mode(const std::string& s);
std::string to_string(UInit u);
UInit parse_u_init(const std::string& s);
GroupSet parse_groups(const std::string& csv);
std::string to_string(const GroupSet& g);

// Everything simulate needs: the cached posterior plus normalization.
struct SavedModel {
    Posterior posterior;
    Normalization norm;
};
void save_model(const std::string& path, const SavedModel& m);
SavedModel load_model(const std::string& path);

enum class Family { DRGP, GpSs, GpFull };
std::string to_string(Family f);
Family parse_family(const std::string& s);

struct ExperimentSpec {
    std::string name = "experiment";
    std::string data_path;
    int output_col = -1;
    Index n_train = 0;
    Index n_test = 0;  // 0 means the remaining rows
    Family family = Family::DRGP;
    ModelConfig model;
    TrainConfig train;
    NormMode norm = NormMode::StdDev;
    bool report_normalized = false;
    Warmup warmup = Warmup::Continuation;
    int narx_hy = 10, narx_hx = 10;  // NARX families only
    int narx_iterations = 100;
    std::string out_dir;  // empty: no files

    void validate() const;
};

struct ExperimentResult {
    double rmse = 0.0;
    std::vector<double> objectives;  // per restart
    std::vector<double> test_rmse;   // per restart
    int best = 0;
    double train_seconds = 0.0, total_seconds = 0.0;
    VectorXd y_true, y_pred, y_var;  // on the reporting scale
    Normalization norm;
};

// A failure inside run_experiment names the stage that failed.
struct StageError : Error {
    std::string stage;
    StageError(const std::string& stage, const std::string& msg) : Error(stage + ": " + msg), stage(stage) {}
};

ExperimentResult run_experiment(const ExperimentSpec& spec);

// Named settings of the benchmark datasets; data is read from data_dir/<name>.csv.
ExperimentSpec bench_preset(const std::string& name, const std::string& data_dir);
const std::vector<std::string>& bench_names();

}  // namespace drgp
