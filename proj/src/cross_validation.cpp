#include "cadx/cross_validation.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <tuple>

#include "cadx/common.hpp"

namespace cadx {

using nlohmann::ordered_json;

int FoldPlan::fold_of(const std::string& specimen_id) const {
  auto it = specimen_fold.find(specimen_id);
  if (it == specimen_fold.end()) throw DataError("specimen not in fold plan: " + specimen_id);
  return it->second;
}

std::vector<std::size_t> FoldPlan::test_entries(const Manifest& m, int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    if (fold_of(m.entries[i].specimen_id) == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::train_entries(const Manifest& m, int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    if (fold_of(m.entries[i].specimen_id) != fold) out.push_back(i);
  return out;
}

std::vector<int> FoldPlan::fold_sizes(const Manifest& m) const {
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (const auto& e : m.entries) ++sizes[static_cast<std::size_t>(fold_of(e.specimen_id))];
  return sizes;
}

FoldPlan plan_folds(const Manifest& manifest, int k, std::uint64_t seed) {
  if (k < 2) throw UsageError("need at least two folds");
  struct Specimen {
    std::string id;
    int label = 0;
    int volumes = 0;
  };
  std::map<std::string, Specimen> by_id;
  for (const auto& e : manifest.entries) {
    Specimen& s = by_id[e.specimen_id];
    s.id = e.specimen_id;
    // A specimen with mixed volume labels is filed under its most severe one.
    s.label = std::max(s.label, code(e.label));
    ++s.volumes;
  }
  if (static_cast<int>(by_id.size()) < k)
    throw DataError("fewer specimens (" + std::to_string(by_id.size()) + ") than folds (" + std::to_string(k) + ")");

  std::vector<Specimen> specimens;
  for (auto& [_, s] : by_id) specimens.push_back(s);
  std::stable_sort(specimens.begin(), specimens.end(), [](const Specimen& a, const Specimen& b) {
    return std::tie(a.label, a.volumes) > std::tie(b.label, b.volumes);
  });

  std::vector<int> rank(static_cast<std::size_t>(k));
  std::iota(rank.begin(), rank.end(), 0);
  Rng rng(mix_seed(seed, 0x666f6c64));
  rng.shuffle(rank.begin(), rank.end());

  std::vector<int> load(static_cast<std::size_t>(k), 0);
  std::vector<std::array<int, kNumFineClasses>> class_load(static_cast<std::size_t>(k));
  FoldPlan plan;
  plan.k = k;
  for (const Specimen& s : specimens) {
    int best = 0;
    for (int f = 1; f < k; ++f) {
      const auto key = [&](int g) {
        return std::make_tuple(load[g], class_load[g][s.label], rank[g]);
      };
      if (key(f) < key(best)) best = f;
    }
    load[best] += s.volumes;
    class_load[best][s.label] += s.volumes;
    plan.specimen_fold[s.id] = best;
  }
  return plan;
}

AgeScaler fit_fold_age_scaler(const Manifest& manifest, const FoldPlan& plan, int fold) {
  std::vector<int> ages;
  for (std::size_t i : plan.train_entries(manifest, fold)) ages.push_back(manifest.entries[i].meta.age);
  return fit_age_scaler(ages);
}

namespace {

template <typename F>
std::optional<double> defined(F f) {
  try {
    return f();
  } catch (const eval::UndefinedMetricError&) {
    return std::nullopt;
  }
}

eval::BinaryCounts count_binary(std::span<const int> truth, std::span<const VolumePrediction> preds) {
  eval::BinaryCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool actual = general_class_of(static_cast<FineClass>(truth[i])) == GeneralClass::High;
    const bool called = preds[i].binary == GeneralClass::High;
    if (actual && called) ++c.tp;
    else if (actual) ++c.fn;
    else if (called) ++c.fp;
    else ++c.tn;
  }
  return c;
}

std::optional<eval::RocCurve> roc_of(std::span<const int> truth, std::span<const VolumePrediction> preds) {
  std::vector<double> scores;
  std::vector<int> positive;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    scores.push_back(preds[i].p_high);
    positive.push_back(general_class_of(static_cast<FineClass>(truth[i])) == GeneralClass::High ? 1 : 0);
  }
  const auto pos = std::count(positive.begin(), positive.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(positive.size())) return std::nullopt;
  return eval::roc_and_auc(scores, positive);
}

eval::ConfusionMatrix empty_matrix(int classes) {
  return eval::ConfusionMatrix{classes, std::vector<std::int64_t>(static_cast<std::size_t>(classes) * classes, 0)};
}

void confusion_pair(std::span<const int> truth, std::span<const VolumePrediction> preds, eval::ConfusionMatrix& fine,
                    eval::ConfusionMatrix& binary) {
  fine = empty_matrix(kNumFineClasses);
  binary = empty_matrix(2);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++fine.at(truth[i], code(preds[i].fine));
    const int actual = general_class_of(static_cast<FineClass>(truth[i])) == GeneralClass::High ? 1 : 0;
    ++binary.at(actual, preds[i].binary == GeneralClass::High ? 1 : 0);
  }
}

}  // namespace

BinaryReport binary_report(const eval::BinaryCounts& c) {
  BinaryReport r;
  r.counts = c;
  r.accuracy = defined([&] { return eval::accuracy(c); });
  r.sensitivity = defined([&] { return eval::sensitivity(c); });
  r.specificity = defined([&] { return eval::specificity(c); });
  if (c.total() > 0) r.accuracy_ci = eval::clopper_pearson(c.tp + c.tn, c.total());
  if (c.tp + c.fn > 0) r.sensitivity_ci = eval::clopper_pearson(c.tp, c.tp + c.fn);
  if (c.tn + c.fp > 0) r.specificity_ci = eval::clopper_pearson(c.tn, c.tn + c.fp);
  return r;
}

EvalReport cross_validate(const Manifest& manifest, const RunConfig& config, std::ostream* log) {
  config.validate();
  if (log) *log << "preprocessing " << manifest.entries.size() << " volumes\n";
  PreparedDataset data = prepare_dataset(manifest, config.preprocess);
  return cross_validate(data, config, log);
}

EvalReport cross_validate(const PreparedDataset& data, const RunConfig& config, std::ostream* log) {
  const Manifest& manifest = *data.manifest;
  std::set<int> present;
  for (const auto& e : manifest.entries) present.insert(code(e.label));
  if (static_cast<int>(present.size()) < kNumFineClasses) throw DataError("every class needs at least one specimen");

  const FoldPlan plan = plan_folds(manifest, config.folds, config.seed);
  EvalReport report;
  report.k = config.folds;
  report.seed = config.seed;
  report.volumes = manifest.entries.size();
  report.rejects = data.rejects;

  std::vector<int> pooled_truth;
  std::vector<VolumePrediction> pooled_preds;
  std::vector<double> fine_acc, bin_acc, sens, spec, aucs;

  for (int fold = 0; fold < config.folds; ++fold) {
    FoldResult fr;
    fr.fold = fold;
    fr.test_entries = plan.test_entries(manifest, fold);
    const std::vector<std::size_t> train = plan.train_entries(manifest, fold);
    fr.train_volumes = train.size();
    fr.age_scaler = fit_fold_age_scaler(manifest, plan, fold);

    std::set<int> train_classes;
    for (std::size_t i : train) train_classes.insert(code(manifest.entries[i].label));
    if (static_cast<int>(train_classes.size()) < kNumFineClasses) {
      fr.degenerate = true;
      fr.warning = "training split lacks a class; fold skipped";
      if (log) *log << "warning: fold " << fold << ": " << fr.warning << "\n";
      report.folds.push_back(std::move(fr));
      continue;
    }
    if (log) *log << "fold " << fold << ": " << train.size() << " training / " << fr.test_entries.size()
                  << " test volumes\n";

    // Manifest entries and prepared volumes share indices.
    TrainedPipeline model = train_pipeline(data, train, config, mix_seed(config.seed, 0x666f6c64, fold), &report.audit);
    fr.cnn_epoch_loss = model.cnn_epoch_loss;
    for (std::size_t i : fr.test_entries) {
      const ManifestEntry& e = manifest.entries[i];
      fr.predictions.push_back(
          predict_prepared(model, e.volume_id, data.volumes[i].images, e.meta, config, &report.audit));
      fr.truth.push_back(code(e.label));
    }
    confusion_pair(fr.truth, fr.predictions, fr.fine, fr.binary);
    fr.fine_accuracy = static_cast<double>(fr.fine.trace()) / static_cast<double>(fr.fine.total());
    fr.binary_metrics = binary_report(count_binary(fr.truth, fr.predictions));
    if (auto roc = roc_of(fr.truth, fr.predictions)) fr.auc = roc->auc;

    fine_acc.push_back(fr.fine_accuracy);
    if (fr.binary_metrics.accuracy) bin_acc.push_back(*fr.binary_metrics.accuracy);
    if (fr.binary_metrics.sensitivity) sens.push_back(*fr.binary_metrics.sensitivity);
    if (fr.binary_metrics.specificity) spec.push_back(*fr.binary_metrics.specificity);
    if (fr.auc) aucs.push_back(*fr.auc);
    pooled_truth.insert(pooled_truth.end(), fr.truth.begin(), fr.truth.end());
    pooled_preds.insert(pooled_preds.end(), fr.predictions.begin(), fr.predictions.end());
    if (log) *log << "fold " << fold << ": five-class accuracy " << fr.fine_accuracy << "\n";
    report.folds.push_back(std::move(fr));
  }

  if (pooled_truth.empty()) {
    report.fine = empty_matrix(kNumFineClasses);
    report.binary = empty_matrix(2);
  } else {
    confusion_pair(pooled_truth, pooled_preds, report.fine, report.binary);
    report.fine_accuracy = static_cast<double>(report.fine.trace()) / static_cast<double>(report.fine.total());
    report.fine_accuracy_ci = eval::clopper_pearson(report.fine.trace(), report.fine.total());
    report.roc = roc_of(pooled_truth, pooled_preds);
  }
  report.binary_metrics = binary_report(count_binary(pooled_truth, pooled_preds));
  report.fold_fine_accuracy = eval::mean_sd(fine_acc);
  report.fold_binary_accuracy = eval::mean_sd(bin_acc);
  report.fold_sensitivity = eval::mean_sd(sens);
  report.fold_specificity = eval::mean_sd(spec);
  report.fold_auc = eval::mean_sd(aucs);
  return report;
}

namespace {

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json opt(const std::optional<eval::Interval>& v) {
  return v ? ordered_json::array({v->lower, v->upper}) : ordered_json(nullptr);
}

ordered_json matrix_json(const eval::ConfusionMatrix& m) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < m.classes; ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < m.classes; ++j) row.push_back(m.at(i, j));
    rows.push_back(row);
  }
  return rows;
}

ordered_json binary_json(const BinaryReport& b) {
  ordered_json j;
  j["counts"] = {{"tp", b.counts.tp}, {"tn", b.counts.tn}, {"fp", b.counts.fp}, {"fn", b.counts.fn}};
  j["accuracy"] = {{"value", opt(b.accuracy)}, {"ci95", opt(b.accuracy_ci)}};
  j["sensitivity"] = {{"value", opt(b.sensitivity)}, {"ci95", opt(b.sensitivity_ci)}};
  j["specificity"] = {{"value", opt(b.specificity)}, {"ci95", opt(b.specificity_ci)}};
  return j;
}

ordered_json mean_sd_json(const eval::MeanSd& m) {
  if (m.n == 0) return {{"mean", nullptr}, {"sd", nullptr}, {"n", 0}};
  return {{"mean", m.mean}, {"sd", m.sd}, {"n", m.n}};
}

ordered_json audit_json(const ProbabilityAudit::Entry& e) {
  return {{"vectors", e.count}, {"max_abs_sum_error", e.max_error}};
}

}  // namespace

ordered_json report_to_json(const EvalReport& r, const Manifest& manifest) {
  ordered_json j;
  j["version"] = kReportVersion;
  j["folds_requested"] = r.k;
  j["seed"] = r.seed;
  j["volumes"] = r.volumes;
  j["rejected_frames"] = {{"saturated", r.rejects[1]}, {"dark", r.rejects[2]}, {"blurry", r.rejects[3]}};

  ordered_json pooled;
  pooled["five_class"] = {{"accuracy", opt(r.fine_accuracy)},
                          {"ci95", opt(r.fine_accuracy_ci)},
                          {"correct", r.fine.trace()},
                          {"total", r.fine.total()},
                          {"confusion", matrix_json(r.fine)}};
  ordered_json binary = binary_json(r.binary_metrics);
  binary["confusion"] = matrix_json(r.binary);
  pooled["binary"] = binary;
  if (r.roc) {
    pooled["auc"] = r.roc->auc;
    ordered_json pts = ordered_json::array();
    for (const auto& p : r.roc->points) pts.push_back({{"threshold", p.threshold}, {"fpr", p.fpr}, {"tpr", p.tpr}});
    pooled["roc"] = pts;
  } else {
    pooled["auc"] = nullptr;
    pooled["roc"] = nullptr;
  }
  j["pooled"] = pooled;

  j["across_folds"] = {{"five_class_accuracy", mean_sd_json(r.fold_fine_accuracy)},
                       {"binary_accuracy", mean_sd_json(r.fold_binary_accuracy)},
                       {"sensitivity", mean_sd_json(r.fold_sensitivity)},
                       {"specificity", mean_sd_json(r.fold_specificity)},
                       {"auc", mean_sd_json(r.fold_auc)}};

  ordered_json folds = ordered_json::array();
  for (const FoldResult& f : r.folds) {
    ordered_json fj;
    fj["fold"] = f.fold;
    fj["status"] = f.degenerate ? "degenerate" : "ok";
    if (f.degenerate) fj["warning"] = f.warning;
    fj["train_volumes"] = f.train_volumes;
    fj["test_volumes"] = f.test_entries.size();
    fj["age_scaler"] = {{"min", f.age_scaler.min}, {"max", f.age_scaler.max}};
    if (!f.degenerate) {
      fj["cnn_epoch_loss"] = f.cnn_epoch_loss;
      fj["five_class_accuracy"] = f.fine_accuracy;
      fj["binary"] = binary_json(f.binary_metrics);
      fj["auc"] = opt(f.auc);
      fj["confusion_fine"] = matrix_json(f.fine);
      ordered_json preds = ordered_json::array();
      for (std::size_t i = 0; i < f.predictions.size(); ++i) {
        ordered_json p = to_json(f.predictions[i]);
        p["truth"] = f.truth[i];
        p["specimen_id"] = manifest.entries[f.test_entries[i]].specimen_id;
        preds.push_back(p);
      }
      fj["predictions"] = preds;
    }
    folds.push_back(fj);
  }
  j["folds"] = folds;
  j["probability_audit"] = {{"cnn_softmax", audit_json(r.audit.cnn_softmax)},
                            {"svm_calibrated", audit_json(r.audit.svm_calibrated)},
                            {"volume_distribution", audit_json(r.audit.volume_distribution)}};
  return j;
}

}  // namespace cadx
