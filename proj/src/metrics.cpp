/*
 * Copyright 2026 The ecgcls Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ecgcls/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ecgcls/error.hpp"
#include "json.hpp"

namespace ecgcls {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(TrainMode mode) {
  return mode == TrainMode::FeatureExtract ? "FEATURE_EXTRACT" : "FINE_TUNE";
}

TrainMode parse_train_mode(std::string_view text) {
  std::string s;
  for (char c : text) s += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (s == "FEATURE_EXTRACT") return TrainMode::FeatureExtract;
  if (s == "FINE_TUNE") return TrainMode::FineTune;
  throw Error(Errc::ParseError, "unknown mode '" + std::string(text) + "'");
}

double binary_cross_entropy(std::span<const double> probabilities, std::span<const Label> labels) {
  if (probabilities.size() != labels.size()) {
    throw Error(Errc::ShapeMismatch, "probabilities and labels differ in length");
  }
  if (probabilities.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(probabilities[i], 1e-7, 1.0 - 1e-7);
    total -= labels[i] == Label::Covid ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(labels.size());
}

EvalReport score_predictions(std::span<const double> probabilities,
                             std::span<const Label> labels, double threshold) {
  if (probabilities.size() != labels.size()) {
    throw Error(Errc::ShapeMismatch, "probabilities and labels differ in length");
  }
  if (labels.empty()) throw Error(Errc::EmptyTestSplit, "nothing to evaluate");
  EvalReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted_covid = probabilities[i] >= threshold;
    const bool covid = labels[i] == Label::Covid;
    if (predicted_covid && covid) ++r.confusion.tp;
    if (predicted_covid && !covid) ++r.confusion.fp;
    if (!predicted_covid && covid) ++r.confusion.fn;
    if (!predicted_covid && !covid) ++r.confusion.tn;
  }
  const auto& c = r.confusion;
  r.n_test = c.total();
  r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(r.n_test);
  r.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  r.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  r.loss = binary_cross_entropy(probabilities, labels);
  return r;
}

std::string report_to_json(const EvalReport& r) {
  json j;
  j["model_id"] = r.model_id;
  j["mode"] = to_string(r.mode);
  j["accuracy"] = r.accuracy;
  j["loss"] = r.loss;
  j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp},
                    {"fn", r.confusion.fn}, {"tn", r.confusion.tn}};
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["n_test"] = r.n_test;
  j["manifest_hash"] = r.manifest_hash;
  j["seed"] = r.seed;
  j["provenance"] = {{"config_hash", r.config_hash}, {"tool_version", r.tool_version}};
  return j.dump(2);
}

EvalReport report_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.model_id = j.at("model_id").get<std::string>();
    r.mode = parse_train_mode(j.at("mode").get<std::string>());
    r.accuracy = j.at("accuracy").get<double>();
    r.loss = j.at("loss").get<double>();
    const auto& c = j.at("confusion");
    r.confusion = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(),
                   c.at("fn").get<std::size_t>(), c.at("tn").get<std::size_t>()};
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    if (j.contains("provenance")) {
      r.config_hash = j["provenance"].value("config_hash", "");
      r.tool_version = j["provenance"].value("tool_version", "");
    }
    r.n_test = j.at("n_test").get<std::size_t>();
    r.manifest_hash = j.at("manifest_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    if (r.confusion.total() != r.n_test) {
      throw Error(Errc::ParseError, "bad report: confusion counts do not sum to n_test");
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("bad report: ") + e.what());
  }
}

void write_report(const fs::path& path, const EvalReport& report) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << report_to_json(report) << '\n';
}

EvalReport read_report(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

Comparison compare_models(std::vector<EvalReport> reports) {
  if (reports.empty()) throw Error(Errc::EmptyReports, "nothing to compare");
  std::stable_sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    return a.loss < b.loss;
  });
  return Comparison{std::move(reports)};
}

std::string Comparison::csv() const {
  std::ostringstream out;
  out << "model,mode,accuracy,loss\n";
  out.precision(17);
  for (const auto& r : ranked) {
    out << r.model_id << ',' << to_string(r.mode) << ',' << r.accuracy << ',' << r.loss << '\n';
  }
  return out.str();
}

std::string Comparison::plot_json() const {
  json j;
  j["series"] = {"accuracy", "loss"};
  j["models"] = json::array();
  for (const auto& r : ranked) {
    j["models"].push_back(
        {{"model", r.model_id}, {"mode", to_string(r.mode)}, {"accuracy", r.accuracy}, {"loss", r.loss}});
  }
  return j.dump(2);
}

namespace {

void render_chart(const fs::path& path, const Comparison& c) {
  const int group = 90;
  const int left = 50;
  const int height = 360;
  const int base = 300;
  const int width = left + group * static_cast<int>(c.ranked.size()) + 20;
  cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  double top = 1.0;
  for (const auto& r : c.ranked) top = std::max(top, r.loss);
  const double scale = 260.0 / top;
  cv::line(img, {left - 5, base}, {width - 10, base}, cv::Scalar(0, 0, 0), 1);
  for (std::size_t i = 0; i < c.ranked.size(); ++i) {
    const auto& r = c.ranked[i];
    const int x = left + static_cast<int>(i) * group;
    const int acc_h = static_cast<int>(std::lround(r.accuracy * scale));
    const int loss_h = static_cast<int>(std::lround(r.loss * scale));
    cv::rectangle(img, {x, base - acc_h}, {x + 30, base}, cv::Scalar(180, 110, 40), cv::FILLED);
    cv::rectangle(img, {x + 34, base - loss_h}, {x + 64, base}, cv::Scalar(60, 120, 230), cv::FILLED);
    cv::putText(img, r.model_id.substr(0, 12), {x, base + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.35,
                cv::Scalar(0, 0, 0), 1);
  }
  cv::putText(img, "accuracy", {left, 20}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(180, 110, 40), 1);
  cv::putText(img, "loss", {left + 100, 20}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(60, 120, 230), 1);
  cv::imwrite(path.string(), img);
}

}  // namespace

void write_comparison(const fs::path& csv_path, const Comparison& comparison) {
  std::error_code ec;
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path(), ec);
  {
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + csv_path.string());
    out << comparison.csv();
  }
  auto json_path = csv_path;
  json_path.replace_extension(".json");
  {
    std::ofstream out(json_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + json_path.string());
    out << comparison.plot_json() << '\n';
  }
  auto png_path = csv_path;
  png_path.replace_extension(".png");
  render_chart(png_path, comparison);
}

}  // namespace ecgcls
