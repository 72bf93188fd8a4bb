// Copyright 2026 The bpca Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Command-line driver. Subcommands: fit, encode, decode, eval, mean, gqr.
// Exit codes: 0 success, 2 usage/config error, 3 data/domain error,
// 4 numerical failure. Diagnostics go to stderr; metrics documents are
// line-oriented `key value` records.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "bpca/bpca.hpp"

namespace {

using bpca::Index;
using bpca::Matrix;
using bpca::Vector;

struct FitArgs {
  std::string input;
  std::string link;
  Index components = 0;
  std::string output;
  std::string coeffs_out;
  double lr_coeff = 0.1;
  std::optional<double> lr_dirs;
  double momentum = 0.9;
  int max_epochs = 500;
  double tol = 1e-7;
  std::uint64_t seed = 0;
  std::string batch_size = "full";
  double ema_decay = 0.99;
};

bpca::FitOptions make_options(const FitArgs& a) {
  bpca::FitOptions opts;
  opts.lr_coeff = a.lr_coeff;
  opts.lr_dirs = a.lr_dirs;
  opts.momentum = a.momentum;
  opts.max_epochs = a.max_epochs;
  opts.tol = a.tol;
  opts.seed = a.seed;
  opts.ema_decay = a.ema_decay;
  if (a.batch_size == "full") {
    opts.batch_size = 0;
  } else {
    try {
      const long b = std::stol(a.batch_size);
      if (b < 1) throw std::invalid_argument("non-positive");
      opts.batch_size = static_cast<Index>(b);
    } catch (const std::exception&) {
      throw bpca::ConfigError("--batch-size must be a positive integer or "
                              "'full'");
    }
  }
  return opts;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_report(std::ostream& os, const bpca::FitReport& report) {
  os << "epochs_run " << report.epochs_run << '\n';
  os << "converged " << (report.converged ? "true" : "false") << '\n';
  os << "final_loss " << fmt(report.final_loss) << '\n';
  std::string joined;
  for (std::size_t i = 0; i < report.loss_history.size(); ++i) {
    if (i) joined += ',';
    joined += fmt(report.loss_history[i]);
  }
  os << "loss_history " << joined << '\n';
}

int run_fit(const FitArgs& args) {
  const Matrix data = bpca::read_matrix(args.input);
  const bpca::LinkFunction link = bpca::parse_link(args.link, data.cols());
  if (args.components < 1)
    throw bpca::ConfigError("--components must be >= 1");
  const bpca::FitOptions opts = make_options(args);
  bpca::FitResult result = bpca::fit(data, link, args.components, opts);
  bpca::save_model(result.model, args.output);
  if (!args.coeffs_out.empty())
    bpca::write_matrix(result.coeffs, args.coeffs_out);
  write_report(std::cout, result.report);
  return 0;
}

struct EvalArgs {
  std::string model;
  std::string input;
  std::string readout_w;
  std::string readout_b;
  std::string labels;
  std::string baseline;
  std::string output;
};

int run_eval(const EvalArgs& args) {
  const bpca::BpcaModel model = bpca::load_model(args.model);
  const Matrix data = bpca::read_matrix(args.input);
  const Matrix coeffs = bpca::encode_rows(model, data);
  const Matrix recon = bpca::decode_rows(model, coeffs);

  std::vector<std::pair<std::string, double>> metrics;
  const double total = bpca::compression_loss(model, data, coeffs);
  metrics.emplace_back("avg_compression_loss",
                       total / static_cast<double>(data.rows()));
  if (model.link().is_softmax())
    metrics.emplace_back("avg_kl", bpca::avg_kl(data, recon));

  if (!args.readout_w.empty() || !args.readout_b.empty() ||
      !args.labels.empty()) {
    if (args.readout_w.empty() || args.readout_b.empty() ||
        args.labels.empty())
      throw bpca::ConfigError(
          "--readout-w, --readout-b and --labels must be given together");
    const Matrix w = bpca::read_matrix(args.readout_w);
    Matrix b = bpca::read_matrix(args.readout_b);
    if (b.rows() == 1 && b.cols() > 1) b = b.transpose().eval();
    if (b.cols() != 1)
      throw bpca::DataError("eval: readout bias must be a vector");
    const bpca::ReadoutLayer layer(w, b.col(0));
    const std::vector<int> labels = bpca::read_labels(args.labels);
    metrics.emplace_back("readout_accuracy",
                         bpca::readout_accuracy(recon, layer, labels));
  }

  if (!args.baseline.empty()) {
    if (args.baseline != "logit-pca")
      throw bpca::ConfigError("unknown baseline '" + args.baseline + "'");
    if (!model.link().is_softmax())
      throw bpca::ConfigError(
          "--baseline logit-pca requires a softmax-link model");
    const Matrix base = bpca::logit_pca_baseline(data, model.components());
    metrics.emplace_back("baseline_avg_kl", bpca::avg_kl(data, base));
  }

  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!args.output.empty()) {
    file.open(args.output, std::ios::trunc);
    if (!file)
      throw bpca::DataError("eval: cannot open '" + args.output + "'");
    os = &file;
  }
  for (const auto& [key, value] : metrics) *os << key << ' ' << fmt(value)
                                               << '\n';
  return 0;
}

struct GqrArgs {
  std::string input;
  std::string metric_file;
  std::string metric_diag;
  bool softmax_augment = false;
  std::string q_out;
  std::string r_out;
};

int run_gqr(const GqrArgs& args) {
  const Matrix a = bpca::read_matrix(args.input);
  if (!args.metric_file.empty() && !args.metric_diag.empty())
    throw bpca::ConfigError("--metric and --metric-diag are exclusive");

  std::optional<bpca::Metric> metric;
  if (!args.metric_file.empty()) {
    const Matrix m = bpca::read_matrix(args.metric_file);
    if (m.rows() == m.cols() && m.rows() > 1) {
      metric = bpca::Metric::full(m);
    } else if (m.cols() == 1) {
      metric = bpca::Metric::diagonal(m.col(0));
    } else if (m.rows() == 1) {
      metric = bpca::Metric::diagonal(m.row(0).transpose());
    } else {
      throw bpca::DataError("gqr: metric file must be square or a vector");
    }
  } else if (!args.metric_diag.empty()) {
    Matrix m = bpca::read_csv(args.metric_diag);
    if (m.rows() == 1 && m.cols() > 1) m = m.transpose().eval();
    if (m.cols() != 1)
      throw bpca::DataError("gqr: --metric-diag must hold a vector");
    metric = bpca::Metric::diagonal(m.col(0));
  } else {
    metric = bpca::Metric::diagonal(Vector::Ones(a.rows()));
  }
  if (metric->dim() != a.rows())
    throw bpca::DataError("gqr: metric dimension does not match input rows");

  const bpca::QrFactors f = args.softmax_augment
                                ? bpca::generalized_qr_softmax(a, *metric)
                                : bpca::generalized_qr(a, *metric);
  bpca::write_matrix(f.q, args.q_out);
  bpca::write_matrix(f.r, args.r_out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bregman PCA with a dual mean: fitting, coding and evaluation "
               "of transfer-function-induced compressions"};
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "Fit a model to a dataset");
  fit->add_option("--input", fit_args.input, "training matrix (.bmat/.csv)")
      ->required();
  fit->add_option("--link", fit_args.link,
                  "link spec: identity | leaky-relu:<beta> | sigmoid | tanh "
                  "| softmax")
      ->required();
  fit->add_option("--components", fit_args.components, "number of components")
      ->required();
  fit->add_option("--output", fit_args.output, "model bundle directory")
      ->required();
  fit->add_option("--coeffs-out", fit_args.coeffs_out,
                  "write fitted coefficients to this matrix file");
  fit->add_option("--lr-coeff", fit_args.lr_coeff, "coefficient step size");
  double lr_dirs_flag = 0.0;
  CLI::Option* lr_dirs_opt =
      fit->add_option("--lr-dirs", lr_dirs_flag,
                      "directions step size (default 0.01/batch rows)");
  fit->add_option("--momentum", fit_args.momentum, "heavy-ball momentum");
  fit->add_option("--max-epochs", fit_args.max_epochs, "epoch limit");
  fit->add_option("--tol", fit_args.tol, "relative loss-change tolerance");
  fit->add_option("--seed", fit_args.seed, "random seed");
  fit->add_option("--batch-size", fit_args.batch_size,
                  "minibatch size or 'full'");
  fit->add_option("--ema-decay", fit_args.ema_decay, "streaming mean decay");

  struct CodecArgs {
    std::string model, input, output;
  } encode_args, decode_args;
  CLI::App* encode = app.add_subcommand("encode", "Compress rows to "
                                                  "coefficients");
  encode->add_option("--model", encode_args.model, "model bundle directory")
      ->required();
  encode->add_option("--input", encode_args.input, "data matrix")->required();
  encode->add_option("--output", encode_args.output, "coefficients out")
      ->required();

  CLI::App* decode = app.add_subcommand("decode", "Reconstruct rows from "
                                                  "coefficients");
  decode->add_option("--model", decode_args.model, "model bundle directory")
      ->required();
  decode->add_option("--coeffs", decode_args.input, "coefficient matrix")
      ->required();
  decode->add_option("--output", decode_args.output, "reconstructions out")
      ->required();

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Score reconstructions");
  eval->add_option("--model", eval_args.model, "model bundle directory")
      ->required();
  eval->add_option("--input", eval_args.input, "data matrix")->required();
  eval->add_option("--readout-w", eval_args.readout_w, "readout weights");
  eval->add_option("--readout-b", eval_args.readout_b, "readout bias");
  eval->add_option("--labels", eval_args.labels, "labels csv (one column)");
  eval->add_option("--baseline", eval_args.baseline,
                   "comparison baseline: logit-pca");
  eval->add_option("--output", eval_args.output,
                   "metrics file (stdout when omitted)");

  struct MeanArgs {
    std::string input, link;
  } mean_args;
  CLI::App* mean = app.add_subcommand("mean", "Print the dual mean");
  mean->add_option("--input", mean_args.input, "data matrix")->required();
  mean->add_option("--link", mean_args.link, "link spec")->required();

  GqrArgs gqr_args;
  CLI::App* gqr = app.add_subcommand("gqr", "Metric-generalized QR "
                                            "decomposition");
  gqr->add_option("--input", gqr_args.input, "matrix to factorize")
      ->required();
  gqr->add_option("--metric", gqr_args.metric_file,
                  "metric matrix file (square, or a vector for diagonal)");
  gqr->add_option("--metric-diag", gqr_args.metric_diag,
                  "diagonal metric entries as csv");
  gqr->add_flag("--softmax-augment", gqr_args.softmax_augment,
                "ones-augmented variant with Q^T M 1 = 0");
  gqr->add_option("--q-out", gqr_args.q_out, "Q factor out")->required();
  gqr->add_option("--r-out", gqr_args.r_out, "R factor out")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*fit) {
      if (lr_dirs_opt->count()) fit_args.lr_dirs = lr_dirs_flag;
      return run_fit(fit_args);
    }
    if (*encode) {
      const bpca::BpcaModel model = bpca::load_model(encode_args.model);
      const Matrix data = bpca::read_matrix(encode_args.input);
      bpca::write_matrix(bpca::encode_rows(model, data), encode_args.output);
      return 0;
    }
    if (*decode) {
      const bpca::BpcaModel model = bpca::load_model(decode_args.model);
      const Matrix coeffs = bpca::read_matrix(decode_args.input);
      bpca::write_matrix(bpca::decode_rows(model, coeffs),
                         decode_args.output);
      return 0;
    }
    if (*eval) return run_eval(eval_args);
    if (*mean) {
      const Matrix data = bpca::read_matrix(mean_args.input);
      const bpca::LinkFunction link =
          bpca::parse_link(mean_args.link, data.cols());
      const Vector m = bpca::dual_mean(link, data);
      for (Index j = 0; j < m.size(); ++j) {
        if (j) std::cout << ' ';
        std::cout << fmt(m[j]);
      }
      std::cout << '\n';
      return 0;
    }
    if (*gqr) return run_gqr(gqr_args);
    throw bpca::ConfigError("no subcommand selected");
  } catch (const bpca::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const bpca::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const bpca::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
