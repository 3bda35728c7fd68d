#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "lfaa/classifiers/classifier.hpp"
#include "lfaa/core/errors.hpp"
#include "lfaa/imaging/dataset.hpp"
#include "lfaa/imaging/image.hpp"
#include "lfaa/nn/image_batch.hpp"

namespace lfaa {

/// Anything that maps a batch of images to predicted labels.
struct Victim {
  std::string id;
  std::function<std::vector<int>(std::span<const ImageTensor>)> classify;
};

template <typename S>
Victim make_victim(std::string id, const BasicClassifier<S>& model, std::size_t chunk = 100) {
  return Victim{std::move(id), [&model, chunk](std::span<const ImageTensor> images) {
                  std::vector<int> out;
                  out.reserve(images.size());
                  for (std::size_t start = 0; start < images.size(); start += chunk) {
                    const auto part = images.subspan(start, std::min(chunk, images.size() - start));
                    const auto labels = model.predict_labels(nn::to_nchw<S>(part));
                    out.insert(out.end(), labels.begin(), labels.end());
                  }
                  return out;
                }};
}

/// Bilinear resize with half-pixel centers.
inline ImageArray resize_bilinear(const ImageArray& x, int out_h, int out_w) {
  const auto& s = x.shape();
  if (out_h < 1 || out_w < 1) throw ArgumentError("resize target must be positive");
  ImageArray out(ImageShape{out_h, out_w, s.channels});
  const double sy = static_cast<double>(s.height) / out_h;
  const double sx = static_cast<double>(s.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(s.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, s.height - 1);
    const double wy = fy - y0;
    for (int xx = 0; xx < out_w; ++xx) {
      const double fx = std::clamp((xx + 0.5) * sx - 0.5, 0.0, static_cast<double>(s.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, s.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < s.channels; ++c) {
        const double top = x.at(y0, x0, c) * (1 - wx) + x.at(y0, x1, c) * wx;
        const double bot = x.at(y1, x0, c) * (1 - wx) + x.at(y1, x1, c) * wx;
        out.at(y, xx, c) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

/// Random resize to a height in [ceil(0.8 H), H] (width scaled alike), then pad back
/// to H x W with 0.5 at a random offset.
inline ImageTensor resize_pad_defense(const ImageTensor& x, std::uint64_t seed) {
  const auto& s = x.shape();
  std::mt19937_64 rng(seed);
  const int lo = static_cast<int>(std::ceil(0.8 * s.height));
  const int new_h = std::uniform_int_distribution<int>(lo, s.height)(rng);
  const int new_w =
      std::clamp(static_cast<int>(std::lround(static_cast<double>(s.width) * new_h / s.height)), 1, s.width);
  const int oy = std::uniform_int_distribution<int>(0, s.height - new_h)(rng);
  const int ox = std::uniform_int_distribution<int>(0, s.width - new_w)(rng);
  const ImageArray small = resize_bilinear(x.array(), new_h, new_w);
  ImageArray out(s, 0.5);
  for (int y = 0; y < new_h; ++y)
    for (int xx = 0; xx < new_w; ++xx)
      for (int c = 0; c < s.channels; ++c) out.at(y + oy, xx + ox, c) = small.at(y, xx, c);
  return clamp_valid(std::move(out));
}

/// Seed for one image under a defended victim. Mixing in the pixel content keeps
/// the defense a pure function of the image, so evaluation is order-invariant.
inline std::uint64_t image_seed(std::uint64_t seed, const ImageTensor& x) {
  const auto v = x.values();
  const std::string_view bytes(reinterpret_cast<const char*>(v.data()), v.size_bytes());
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(std::hash<std::string_view>{}(bytes))};
  std::uint64_t out[1];
  seq.generate(reinterpret_cast<std::uint32_t*>(out), reinterpret_cast<std::uint32_t*>(out) + 2);
  return out[0];
}

/// Wraps a victim so every image passes through resize_pad_defense first.
inline Victim with_resize_pad(Victim inner, std::uint64_t seed) {
  std::string id = inner.id + "+rp";
  return Victim{std::move(id), [inner = std::move(inner), seed](std::span<const ImageTensor> images) {
                  std::vector<ImageTensor> defended;
                  defended.reserve(images.size());
                  for (const auto& img : images) defended.push_back(resize_pad_defense(img, image_seed(seed, img)));
                  return inner.classify(defended);
                }};
}

/// One adversary's fate under one victim.
struct PredictionRecord {
  std::string source;
  std::string victim;
  std::string attack;
  int target = 0;
  int image_index = 0;
  int true_label = 0;
  int clean_pred = -1;  // -1 when the clean prediction was not computed
  int adv_pred = 0;

  bool operator==(const PredictionRecord&) const = default;
};

struct AttackReport {
  std::string source;
  std::string victim;
  std::string attack;
  int target = 0;
  bool white_box = false;
  int n_images = 0;
  int n_target_hits = 0;
  int n_label_flips = 0;
  double tasr = 0.0;
  double uasr = 0.0;
  // Restricted to images the victim classified correctly before the attack.
  // Both stay 0 when no clean predictions were supplied.
  int n_clean_correct = 0;
  int n_flips_of_correct = 0;
  double uasr_correct = 0.0;

  bool operator==(const AttackReport&) const = default;
};

inline double rate(int hits, int n) { return n > 0 ? static_cast<double>(hits) / n : 0.0; }

/// Builds a report from per-image records of a single (source, victim, attack, target) cell.
inline AttackReport report_from_records(std::span<const PredictionRecord> records, bool white_box = false) {
  AttackReport r;
  if (!records.empty()) {
    r.source = records.front().source;
    r.victim = records.front().victim;
    r.attack = records.front().attack;
    r.target = records.front().target;
  }
  r.white_box = white_box;
  for (const auto& p : records) {
    ++r.n_images;
    r.n_target_hits += p.adv_pred == r.target;
    r.n_label_flips += p.adv_pred != p.true_label;
    if (p.clean_pred == p.true_label) {
      ++r.n_clean_correct;
      r.n_flips_of_correct += p.adv_pred != p.true_label;
    }
  }
  r.tasr = rate(r.n_target_hits, r.n_images);
  r.uasr = rate(r.n_label_flips, r.n_images);
  r.uasr_correct = rate(r.n_flips_of_correct, r.n_clean_correct);
  return r;
}

/// Regroups a prediction log into one report per cell, in order of first appearance.
inline std::vector<AttackReport> reports_from_log(std::span<const PredictionRecord> log) {
  using Key = std::tuple<std::string, std::string, std::string, int>;
  std::vector<Key> order;
  std::map<Key, std::vector<PredictionRecord>> groups;
  for (const auto& p : log) {
    Key key{p.source, p.victim, p.attack, p.target};
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) order.push_back(key);
    it->second.push_back(p);
  }
  std::vector<AttackReport> out;
  for (const auto& key : order) out.push_back(report_from_records(groups[key], std::get<0>(key) == std::get<1>(key)));
  return out;
}

struct EvalContext {
  std::string source;
  std::string attack;
  std::span<const int> image_indices{};      // dataset positions; defaults to 0..n-1
  std::span<const int> clean_predictions{};  // victim's labels on the clean images, optional
  bool white_box = false;
};

/// Counts target hits and label flips of `victim` on the adversaries.
inline AttackReport evaluate_attack(std::span<const ImageTensor> adversaries, std::span<const int> true_labels,
                                    int target_class, const Victim& victim, const EvalContext& ctx = {},
                                    std::vector<PredictionRecord>* log = nullptr) {
  if (adversaries.size() != true_labels.size()) throw ShapeError("adversary and label counts differ");
  if (!ctx.image_indices.empty() && ctx.image_indices.size() != adversaries.size())
    throw ShapeError("image index count differs from adversary count");
  if (!ctx.clean_predictions.empty() && ctx.clean_predictions.size() != adversaries.size())
    throw ShapeError("clean prediction count differs from adversary count");
  const auto preds = victim.classify(adversaries);
  if (preds.size() != adversaries.size()) throw StateError("victim " + victim.id + " returned the wrong label count");
  std::vector<PredictionRecord> records;
  records.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    records.push_back(PredictionRecord{ctx.source, victim.id, ctx.attack, target_class,
                                       ctx.image_indices.empty() ? static_cast<int>(i) : ctx.image_indices[i],
                                       true_labels[i], ctx.clean_predictions.empty() ? -1 : ctx.clean_predictions[i],
                                       preds[i]});
  }
  AttackReport r = report_from_records(records, ctx.white_box);
  r.source = ctx.source;
  r.victim = victim.id;
  r.attack = ctx.attack;
  r.target = target_class;
  if (log) log->insert(log->end(), records.begin(), records.end());
  return r;
}

/// Crafts adversaries for images on the model at `source_index`, all aimed at `target`.
using Crafter = std::function<std::vector<ImageTensor>(std::size_t source_index, std::span<const ImageTensor>, int target)>;

struct TransferMatrix {
  std::vector<std::string> models;
  std::vector<std::size_t> sources;  // indices into models that served as surrogates
  std::string attack;
  std::vector<int> targets;
  std::vector<AttackReport> reports;  // source-major, then victim, then target
  std::vector<PredictionRecord> predictions;

  const AttackReport& at(std::size_t source_row, std::size_t victim, std::size_t target_pos) const {
    return reports.at((source_row * models.size() + victim) * targets.size() + target_pos);
  }
  /// Mean TASR of a (source, victim) cell over the configured targets.
  double mean_tasr(std::size_t source_row, std::size_t victim) const {
    double sum = 0.0;
    for (std::size_t t = 0; t < targets.size(); ++t) sum += at(source_row, victim, t).tasr;
    return targets.empty() ? 0.0 : sum / static_cast<double>(targets.size());
  }
  bool complete() const { return reports.size() == sources.size() * models.size() * targets.size(); }
};

/// Images whose true label differs from `target`, with their dataset positions.
inline std::vector<int> non_target_indices(const LabeledDataset& ds, int target) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i] != target) idx.push_back(static_cast<int>(i));
  return idx;
}

/// Attacks every source in `sources` (all models when empty) for every target and scores
/// each adversary set on every victim. Images already labelled with the target are skipped.
inline TransferMatrix transfer_matrix(const std::vector<Victim>& models, const std::string& attack_label,
                                      const Crafter& craft, const LabeledDataset& ds, std::span<const int> targets,
                                      std::vector<std::size_t> sources = {}, std::size_t chunk = 200) {
  if (models.empty()) throw ArgumentError("transfer matrix needs at least one model");
  if (targets.empty()) throw ArgumentError("transfer matrix needs at least one target class");
  if (sources.empty())
    for (std::size_t i = 0; i < models.size(); ++i) sources.push_back(i);
  for (std::size_t s : sources)
    if (s >= models.size()) throw ArgumentError("source index out of range");
  for (int t : targets)
    if (t < 0 || t >= ds.num_classes()) throw ArgumentError("target class " + std::to_string(t) + " out of range");

  TransferMatrix m;
  for (const auto& v : models) m.models.push_back(v.id);
  m.sources = sources;
  m.attack = attack_label;
  m.targets.assign(targets.begin(), targets.end());

  std::vector<std::vector<int>> clean(models.size());
  for (std::size_t v = 0; v < models.size(); ++v) clean[v] = models[v].classify(ds.images);

  std::vector<std::vector<std::vector<AttackReport>>> grid(sources.size(),
                                                           std::vector<std::vector<AttackReport>>(models.size()));
  std::vector<PredictionRecord> log;
  for (std::size_t row = 0; row < sources.size(); ++row) {
    const std::size_t s = sources[row];
    for (int target : m.targets) {
      const auto idx = non_target_indices(ds, target);
      std::vector<ImageTensor> adv;
      adv.reserve(idx.size());
      for (std::size_t start = 0; start < idx.size(); start += chunk) {
        std::vector<ImageTensor> part;
        for (std::size_t i = start; i < std::min(idx.size(), start + chunk); ++i) part.push_back(ds.images[idx[i]]);
        auto crafted = craft(s, part, target);
        if (crafted.size() != part.size()) throw StateError("crafter returned the wrong number of adversaries");
        for (auto& a : crafted) adv.push_back(std::move(a));
      }
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (int i : idx) labels.push_back(ds.labels[i]);
      for (std::size_t v = 0; v < models.size(); ++v) {
        std::vector<int> clean_sub;
        clean_sub.reserve(idx.size());
        for (int i : idx) clean_sub.push_back(clean[v][i]);
        EvalContext ctx{models[s].id, attack_label, idx, clean_sub, v == s};
        grid[row][v].push_back(evaluate_attack(adv, labels, target, models[v], ctx, &log));
      }
    }
  }
  for (auto& row : grid)
    for (auto& cell : row)
      for (auto& r : cell) m.reports.push_back(std::move(r));
  // Log in the same source/victim/target order as the reports.
  std::stable_sort(log.begin(), log.end(), [&](const PredictionRecord& a, const PredictionRecord& b) {
    auto pos = [&](const std::string& id) {
      return static_cast<std::size_t>(std::find(m.models.begin(), m.models.end(), id) - m.models.begin());
    };
    auto tpos = [&](int t) { return std::find(m.targets.begin(), m.targets.end(), t) - m.targets.begin(); };
    return std::tuple(pos(a.source), pos(a.victim), tpos(a.target)) < std::tuple(pos(b.source), pos(b.victim), tpos(b.target));
  });
  m.predictions = std::move(log);
  return m;
}

/// Draws `count` distinct target classes from [0, num_classes), returned sorted.
inline std::vector<int> sample_target_classes(int num_classes, int count, std::uint64_t seed) {
  if (count < 1 || count > num_classes) throw ArgumentError("cannot sample " + std::to_string(count) + " targets from " +
                                                            std::to_string(num_classes) + " classes");
  std::vector<int> all(num_classes);
  for (int i = 0; i < num_classes; ++i) all[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

struct AblationRow {
  int k = 0;
  double white_box_tasr = 0.0;
  double mean_black_box_tasr = 0.0;
  double score = 0.0;                // black-box mean, or white-box when there are no other victims
  std::vector<double> victim_tasr;   // per victim, averaged over targets
};

struct AblationSummary {
  std::vector<std::string> models;
  std::string source;
  std::vector<int> targets;
  std::vector<AblationRow> rows;
  int argmax_k = 0;
  std::vector<TransferMatrix> matrices;
};

/// Scores one source-row matrix per k. `craft_for_k` returns the crafter for kernel size k,
/// which is where a generator gets trained or loaded.
inline AblationSummary ablate_kernel(std::span<const int> k_values, const std::function<Crafter(int k)>& craft_for_k,
                                     const std::vector<Victim>& models, std::size_t source_index,
                                     const LabeledDataset& ds, std::span<const int> targets) {
  if (k_values.empty()) throw ArgumentError("ablation needs at least one k");
  AblationSummary out;
  for (const auto& v : models) out.models.push_back(v.id);
  out.source = models.at(source_index).id;
  out.targets.assign(targets.begin(), targets.end());
  double best = -1.0;
  for (int k : k_values) {
    if (k < 1) throw ArgumentError("kernel k must be >= 1, got " + std::to_string(k));
    auto m = transfer_matrix(models, "lfaa_k" + std::to_string(k), craft_for_k(k), ds, targets, {source_index});
    AblationRow row;
    row.k = k;
    double bb = 0.0;
    for (std::size_t v = 0; v < models.size(); ++v) {
      const double t = m.mean_tasr(0, v);
      row.victim_tasr.push_back(t);
      if (v == source_index)
        row.white_box_tasr = t;
      else
        bb += t;
    }
    row.mean_black_box_tasr = models.size() > 1 ? bb / static_cast<double>(models.size() - 1) : 0.0;
    row.score = models.size() > 1 ? row.mean_black_box_tasr : row.white_box_tasr;
    if (row.score > best) {
      best = row.score;
      out.argmax_k = k;
    }
    out.rows.push_back(std::move(row));
    out.matrices.push_back(std::move(m));
  }
  return out;
}

}  // namespace lfaa
