#include "inml/emulator.hpp"

#include "inml/error.hpp"
#include "inml/rng.hpp"
#include "json_util.hpp"

#include <algorithm>
#include <map>
#include <thread>
#include <unordered_map>

namespace inml {

using detail::json;

ResourceProfile unbounded_profile() {
  ResourceProfile p;
  p.name = "unbounded";
  p.n_stages = 1 << 20;
  p.max_tables_per_stage = 1 << 20;
  p.sram_entries_budget = UINT64_MAX;
  p.tcam_entries_budget = UINT64_MAX;
  p.max_key_bits = 1 << 20;
  p.max_action_bits = 1 << 20;
  p.metadata_bits_budget = 1 << 30;
  p.adds_per_stage = 1 << 20;
  return p;
}

namespace {

std::uint64_t width_mask(int w) { return w >= 64 ? UINT64_MAX : (std::uint64_t{1} << w) - 1; }

bool action_fits(std::int64_t v, const Field& f) {
  if (f.is_signed) return fits_signed(v, f.width);
  return v >= 0 && fits_unsigned(static_cast<std::uint64_t>(v), f.width);
}

struct CompiledTable {
  const TableDef* def = nullptr;
  std::vector<std::size_t> key_slots;
  std::vector<std::size_t> action_slots;
  int stage = 0;
  // exact: packed key -> entry; range (one key): entries sorted by lo;
  // ternary with a narrow key: dense first-match array.
  bool packed = false;
  std::unordered_map<std::uint64_t, std::uint32_t> exact;
  std::map<std::vector<std::uint64_t>, std::uint32_t> exact_wide;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> by_lo;
  std::vector<std::int32_t> dense;
  int key_bits = 0;
};

}  // namespace

struct Emulator::Impl {
  StagedProgram s;
  std::vector<CompiledTable> tables;  // execution order (stage, then table index)
  std::map<std::string, std::size_t> slot_of;
  std::size_t n_slots = 0;
  std::uint64_t pairs = 0;
  // Decision-step slots.
  std::vector<std::size_t> vote_slots;
  std::vector<std::vector<std::size_t>> sum_slots;
  std::size_t class_slot = 0, conf_slot = 0;
  bool has_conf_field = false;

  void build();
  int lookup(const CompiledTable& t, const std::vector<std::int64_t>& state) const;
  Prediction run(std::span<const std::uint64_t> x) const;
};

void Emulator::Impl::build() {
  const auto& p = s.program;
  for (const auto& f : p.features) slot_of.emplace(f.name, slot_of.size());
  for (const auto& t : p.tables)
    for (const auto& a : t.actions) {
      if (slot_of.count(a.name)) throw ProgramError("field '" + a.name + "' collides with another field or feature");
      slot_of.emplace(a.name, slot_of.size());
    }
  // no tables: the class register is never written and reads as zero
  if (p.tables.empty() && p.combine.kind == CombineKind::code_lookup && !slot_of.count(p.combine.class_field))
    slot_of.emplace(p.combine.class_field, slot_of.size());
  n_slots = slot_of.size();

  std::map<std::string, int> produced_at;
  for (std::size_t i = 0; i < p.tables.size(); ++i)
    for (const auto& a : p.tables[i].actions) produced_at[a.name] = s.table_stage[i];

  std::vector<std::size_t> order(p.tables.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s.table_stage[a] < s.table_stage[b]; });

  Rng pair_rng(0x5eed);
  for (auto i : order) {
    const auto& def = p.tables[i];
    CompiledTable ct;
    ct.def = &def;
    ct.stage = s.table_stage[i];
    for (const auto& k : def.keys) {
      auto it = slot_of.find(k.name);
      if (it == slot_of.end()) throw ProgramError("table '" + def.name + "' reads unknown field '" + k.name + "'");
      auto pr = produced_at.find(k.name);
      if (pr != produced_at.end() && pr->second >= ct.stage)
        throw ProgramError("table '" + def.name + "' reads '" + k.name + "' before it is written");
      ct.key_slots.push_back(it->second);
      ct.key_bits += k.width;
    }
    for (const auto& a : def.actions) ct.action_slots.push_back(slot_of.at(a.name));
    if (def.default_action.size() != def.actions.size())
      throw ProgramError("table '" + def.name + "' default action has the wrong arity");
    for (std::size_t a = 0; a < def.actions.size(); ++a)
      if (!action_fits(def.default_action[a], def.actions[a]))
        throw ProgramError("table '" + def.name + "' default action value does not fit its field");
    for (const auto& e : def.entries) {
      if (e.key.size() != def.keys.size() || e.action.size() != def.actions.size())
        throw ProgramError("table '" + def.name + "' has an entry of the wrong arity");
      for (std::size_t d = 0; d < e.key.size(); ++d) {
        std::uint64_t m = width_mask(def.keys[d].width);
        const auto& k = e.key[d];
        bool ok = (k.value & ~m) == 0;
        if (def.kind == MatchKind::ternary) ok = ok && (k.mask & ~m) == 0 && (k.value & ~k.mask) == 0;
        if (def.kind == MatchKind::range) ok = ok && k.value <= k.hi && (k.hi & ~m) == 0;
        if (!ok) throw ProgramError("table '" + def.name + "' has a key outside its field width");
      }
      for (std::size_t a = 0; a < def.actions.size(); ++a)
        if (!action_fits(e.action[a], def.actions[a]))
          throw ProgramError("table '" + def.name + "' action value " + std::to_string(e.action[a]) +
                             " does not fit field '" + def.actions[a].name + "'");
    }

    const auto n = static_cast<std::uint32_t>(def.entries.size());
    switch (def.kind) {
      case MatchKind::exact:
        ct.packed = ct.key_bits <= 64;
        for (std::uint32_t j = 0; j < n; ++j) {
          const auto& key = def.entries[j].key;
          if (ct.packed) {
            std::uint64_t packed = 0;
            for (std::size_t d = 0; d < key.size(); ++d) packed = (def.keys[d].width >= 64 ? 0 : packed << def.keys[d].width) | key[d].value;
            ct.exact.emplace(packed, j);
          } else {
            std::vector<std::uint64_t> v;
            for (const auto& k : key) v.push_back(k.value);
            ct.exact_wide.emplace(std::move(v), j);
          }
        }
        break;
      case MatchKind::range:
        if (def.keys.size() == 1) {
          for (std::uint32_t j = 0; j < n; ++j) ct.by_lo.emplace_back(def.entries[j].key[0].value, j);
          std::stable_sort(ct.by_lo.begin(), ct.by_lo.end());
          for (std::size_t j = 1; j < ct.by_lo.size(); ++j)
            if (def.entries[ct.by_lo[j - 1].second].key[0].hi >= ct.by_lo[j].first)
              throw ProgramError("range table '" + def.name + "' has overlapping entries");
        }
        break;
      case MatchKind::ternary: {
        auto overlap = [&](std::uint32_t a, std::uint32_t b) {
          const auto& ka = def.entries[a].key;
          const auto& kb = def.entries[b].key;
          for (std::size_t d = 0; d < ka.size(); ++d)
            if ((ka[d].value ^ kb[d].value) & ka[d].mask & kb[d].mask) return false;
          return true;
        };
        const std::uint64_t all_pairs = static_cast<std::uint64_t>(n) * (n > 0 ? n - 1 : 0) / 2;
        if (all_pairs <= 4096) {
          for (std::uint32_t a = 0; a < n; ++a)
            for (std::uint32_t b = a + 1; b < n; ++b) {
              ++pairs;
              if (overlap(a, b)) throw ProgramError("ternary table '" + def.name + "' has overlapping patterns");
            }
        } else {
          for (int r = 0; r < 4096; ++r) {
            auto a = static_cast<std::uint32_t>(pair_rng.below(n));
            auto b = static_cast<std::uint32_t>(pair_rng.below(n - 1));
            if (b >= a) ++b;
            ++pairs;
            if (overlap(a, b)) throw ProgramError("ternary table '" + def.name + "' has overlapping patterns");
          }
        }
        if (ct.key_bits <= 16) {
          ct.dense.assign(std::size_t{1} << ct.key_bits, -1);
          for (std::uint64_t packed = 0; packed < ct.dense.size(); ++packed) {
            for (std::uint32_t j = 0; j < n; ++j) {
              const auto& key = def.entries[j].key;
              bool hit = true;
              int shift = ct.key_bits;
              for (std::size_t d = 0; d < key.size() && hit; ++d) {
                shift -= def.keys[d].width;
                std::uint64_t v = (packed >> shift) & width_mask(def.keys[d].width);
                hit = (v & key[d].mask) == key[d].value;
              }
              if (hit) {
                ct.dense[packed] = static_cast<std::int32_t>(j);
                break;
              }
            }
          }
        }
        break;
      }
    }
    tables.push_back(std::move(ct));
  }

  const auto& c = p.combine;
  auto slot = [&](const std::string& f) {
    auto it = slot_of.find(f);
    if (it == slot_of.end()) throw ProgramError("decision step reads unknown field '" + f + "'");
    return it->second;
  };
  for (const auto& f : c.vote_fields) vote_slots.push_back(slot(f));
  for (const auto& sum : c.sums) {
    std::vector<std::size_t> v;
    for (const auto& f : sum.addends) v.push_back(slot(f));
    sum_slots.push_back(std::move(v));
  }
  if (p.combine_data.constants.size() != c.sums.size()) throw ProgramError("decision constants arity mismatch");
  if (c.kind == CombineKind::code_lookup) {
    class_slot = slot(c.class_field);
    if (c.confidence == ConfidenceKind::field) {
      conf_slot = slot(c.confidence_field);
      has_conf_field = true;
    }
  }
  bool lut = c.confidence == ConfidenceKind::vote_fraction || c.confidence == ConfidenceKind::margin_logistic ||
             c.confidence == ConfidenceKind::sum_table;
  if (lut && p.combine_data.confidence_lut.empty()) throw ProgramError("confidence lookup has no rows");
  if (c.kind == CombineKind::hyperplane_vote && c.sums.empty() && c.vote_fields.size() != c.hyperplane_classes.size())
    throw ProgramError("hyperplane vote fields and class pairs differ in count");
  if (c.kind == CombineKind::hyperplane_vote && !c.sums.empty() && c.sums.size() != c.hyperplane_classes.size())
    throw ProgramError("hyperplane sums and class pairs differ in count");
}

int Emulator::Impl::lookup(const CompiledTable& t, const std::vector<std::int64_t>& state) const {
  const auto& def = *t.def;
  switch (def.kind) {
    case MatchKind::exact: {
      if (t.packed) {
        std::uint64_t packed = 0;
        for (std::size_t d = 0; d < t.key_slots.size(); ++d) {
          int w = def.keys[d].width;
          packed = (w >= 64 ? 0 : packed << w) | (static_cast<std::uint64_t>(state[t.key_slots[d]]) & width_mask(w));
        }
        auto it = t.exact.find(packed);
        return it == t.exact.end() ? -1 : static_cast<int>(it->second);
      }
      std::vector<std::uint64_t> v;
      for (std::size_t d = 0; d < t.key_slots.size(); ++d)
        v.push_back(static_cast<std::uint64_t>(state[t.key_slots[d]]) & width_mask(def.keys[d].width));
      auto it = t.exact_wide.find(v);
      return it == t.exact_wide.end() ? -1 : static_cast<int>(it->second);
    }
    case MatchKind::range: {
      if (def.keys.size() == 1) {
        auto v = static_cast<std::uint64_t>(state[t.key_slots[0]]) & width_mask(def.keys[0].width);
        auto it = std::upper_bound(t.by_lo.begin(), t.by_lo.end(), std::make_pair(v, UINT32_MAX));
        if (it == t.by_lo.begin()) return -1;
        --it;
        return def.entries[it->second].key[0].hi >= v ? static_cast<int>(it->second) : -1;
      }
      for (std::size_t j = 0; j < def.entries.size(); ++j) {
        bool hit = true;
        for (std::size_t d = 0; d < t.key_slots.size() && hit; ++d) {
          auto v = static_cast<std::uint64_t>(state[t.key_slots[d]]) & width_mask(def.keys[d].width);
          hit = def.entries[j].key[d].value <= v && v <= def.entries[j].key[d].hi;
        }
        if (hit) return static_cast<int>(j);
      }
      return -1;
    }
    case MatchKind::ternary: {
      if (!t.dense.empty()) {
        std::uint64_t packed = 0;
        for (std::size_t d = 0; d < t.key_slots.size(); ++d) {
          int w = def.keys[d].width;
          packed = (packed << w) | (static_cast<std::uint64_t>(state[t.key_slots[d]]) & width_mask(w));
        }
        return t.dense[packed];
      }
      for (std::size_t j = 0; j < def.entries.size(); ++j) {
        bool hit = true;
        for (std::size_t d = 0; d < t.key_slots.size() && hit; ++d) {
          auto v = static_cast<std::uint64_t>(state[t.key_slots[d]]) & width_mask(def.keys[d].width);
          hit = (v & def.entries[j].key[d].mask) == def.entries[j].key[d].value;
        }
        if (hit) return static_cast<int>(j);
      }
      return -1;
    }
  }
  return -1;
}

namespace {

std::int64_t lut_lookup(const std::vector<LutEntry>& lut, std::int64_t key) {
  auto it = std::upper_bound(lut.begin(), lut.end(), key, [](std::int64_t k, const LutEntry& e) { return k < e.lo; });
  if (it == lut.begin()) return lut.front().conf_q;
  return std::prev(it)->conf_q;
}

bool tied(const std::vector<std::int64_t>& v, int top, bool minimize) {
  for (int i = 0; i < static_cast<int>(v.size()); ++i)
    if (i != top && v[i] == v[top]) return true;
  (void)minimize;
  return false;
}

}  // namespace

Prediction Emulator::Impl::run(std::span<const std::uint64_t> x) const {
  const auto& p = s.program;
  if (x.size() != p.features.size())
    throw FeatureError("feature vector has " + std::to_string(x.size()) + " values, program expects " +
                       std::to_string(p.features.size()));
  std::vector<std::int64_t> state(n_slots, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > p.features[i].max_value())
      throw FeatureError("feature '" + p.features[i].name + "' value " + std::to_string(x[i]) + " exceeds its width");
    state[i] = static_cast<std::int64_t>(x[i]);
  }
  // Tables in a stage read only fields written by earlier stages (checked at
  // load), so in-order application equals the parallel-stage semantics.
  for (const auto& t : tables) {
    int j = lookup(t, state);
    const auto& act = j < 0 ? t.def->default_action : t.def->entries[j].action;
    for (std::size_t a = 0; a < t.action_slots.size(); ++a) state[t.action_slots[a]] = act[a];
  }

  const auto& c = p.combine;
  const auto& data = p.combine_data;
  const Real scale = boost::multiprecision::ldexp(Real(1), c.confidence_bits);
  Prediction out;
  auto sums = [&]() {
    std::vector<std::int64_t> v;
    for (std::size_t j = 0; j < c.sums.size(); ++j) {
      std::int64_t acc = c.sums[j].has_constant ? data.constants[j] : 0;
      for (auto sl : sum_slots[j]) {
        if (__builtin_add_overflow(acc, state[sl], &acc)) throw OverflowError("sum '" + c.sums[j].name + "' overflowed");
      }
      if (!fits_signed(acc, c.sums[j].width))
        throw OverflowError("sum '" + c.sums[j].name + "' exceeds its " + std::to_string(c.sums[j].width) + "-bit register");
      v.push_back(acc);
    }
    return v;
  };
  auto conf_from = [&](std::int64_t key) {
    if (c.confidence == ConfidenceKind::none) return Real(1);
    return Real(lut_lookup(data.confidence_lut, key)) / scale;
  };
  auto from_votes = [&](const std::vector<std::int64_t>& votes) {
    out.class_id = argmax_lowest(votes);
    for (auto v : votes) out.scores.emplace_back(v);
    out.tie = tied(votes, out.class_id, false);
    out.confidence = conf_from(votes[out.class_id]);
  };

  switch (c.kind) {
    case CombineKind::code_lookup: {
      out.class_id = static_cast<int>(state[class_slot]);
      if (out.class_id >= c.n_classes) throw ProgramError("classification emitted class " + std::to_string(out.class_id));
      out.scores.assign(c.n_classes, Real(0));
      out.scores[out.class_id] = 1;
      out.confidence = has_conf_field ? Real(state[conf_slot]) / scale : Real(1);
      break;
    }
    case CombineKind::vote_majority: {
      std::vector<std::int64_t> votes(c.n_classes, 0);
      for (auto sl : vote_slots) {
        if (state[sl] < 0 || state[sl] >= c.n_classes) throw ProgramError("vote for class " + std::to_string(state[sl]));
        ++votes[state[sl]];
      }
      from_votes(votes);
      break;
    }
    case CombineKind::hyperplane_vote: {
      std::vector<std::int64_t> votes(c.n_classes, 0);
      if (!c.sums.empty()) {
        auto v = sums();
        for (std::size_t j = 0; j < v.size(); ++j) {
          auto [a, b] = c.hyperplane_classes[j];
          ++votes[v[j] > 0 ? b : (v[j] < 0 ? a : std::min(a, b))];
          out.raw.emplace_back(v[j]);
        }
      } else {
        for (std::size_t j = 0; j < vote_slots.size(); ++j) {
          auto [a, b] = c.hyperplane_classes[j];
          ++votes[state[vote_slots[j]] ? b : a];
        }
      }
      from_votes(votes);
      break;
    }
    case CombineKind::weighted_sum_argmax: {
      auto v = sums();
      for (auto s0 : v) out.raw.emplace_back(s0);
      if (c.binary_margin) {
        out.class_id = v[0] > 0 ? 1 : 0;
        out.scores = {Real(0), Real(v[0])};
        out.tie = v[0] == 0;
        out.confidence = conf_from(v[0] < 0 ? -v[0] : v[0]);
        break;
      }
      out.class_id = argmax_lowest(v);
      for (auto s0 : v) out.scores.emplace_back(s0);
      out.tie = tied(v, out.class_id, false);
      std::int64_t second = INT64_MIN;
      for (int i = 0; i < static_cast<int>(v.size()); ++i)
        if (i != out.class_id) second = std::max(second, v[i]);
      out.confidence = conf_from(second == INT64_MIN ? INT64_MAX : v[out.class_id] - second);
      break;
    }
    case CombineKind::sum_argmin: {
      auto v = sums();
      int best = 0;
      for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] < v[best]) best = i;
      out.class_id = best;
      for (auto s0 : v) {
        out.raw.emplace_back(s0);
        out.scores.emplace_back(-s0);
      }
      out.tie = tied(v, best, true);
      out.confidence = conf_from(0);
      break;
    }
    case CombineKind::sum_threshold: {
      auto v = sums();
      out.raw = {Real(v[0])};
      out.scores = {Real(v[0]), Real(data.threshold)};
      out.class_id = v[0] < data.threshold ? 1 : 0;
      out.tie = v[0] == data.threshold;
      out.confidence = conf_from(v[0]);
      break;
    }
  }
  return out;
}

Emulator::Emulator(StagedProgram s) : impl_(std::make_unique<Impl>()) {
  impl_->s = std::move(s);
  if (impl_->s.table_stage.size() != impl_->s.program.tables.size())
    throw ProgramError("staged program lacks a stage for every table");
  impl_->build();
}

Emulator::Emulator(const PipelineProgram& p) : Emulator(place_stages(p, unbounded_profile())) {}
Emulator::~Emulator() = default;
Emulator::Emulator(Emulator&&) noexcept = default;
Emulator& Emulator::operator=(Emulator&&) noexcept = default;

Prediction Emulator::run(std::span<const std::uint64_t> x) const { return impl_->run(x); }

const StagedProgram& Emulator::staged() const { return impl_->s; }
std::uint64_t Emulator::checked_pairs() const { return impl_->pairs; }

namespace {

int resolve_threads(int threads, std::size_t work) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(threads), std::max<std::size_t>(work / 256, 1)));
}

// Runs body(begin, end, chunk) over contiguous chunks; rethrows the first
// error by chunk order.
template <class Body>
void parallel_chunks(std::size_t n, int threads, Body body) {
  threads = resolve_threads(threads, n);
  if (threads <= 1) {
    body(0, n, 0);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    std::size_t b = n * t / threads, e = n * (t + 1) / threads;
    pool.emplace_back([&, b, e, t] {
      try {
        body(b, e, t);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<Prediction> Emulator::run_batch(const std::vector<FeatureVector>& xs, int threads) const {
  std::vector<Prediction> out(xs.size());
  parallel_chunks(xs.size(), threads, [&](std::size_t b, std::size_t e, int) {
    for (std::size_t i = b; i < e; ++i) {
      try {
        out[i] = impl_->run(xs[i]);
      } catch (const Error& err) {
        throw Error(err.code(), "input " + std::to_string(i) + ": " + err.what());
      }
    }
  });
  return out;
}

Prediction run_vector(const StagedProgram& s, std::span<const std::uint64_t> x) { return Emulator(s).run(x); }

std::vector<Prediction> run_batch(const StagedProgram& s, const std::vector<FeatureVector>& xs, int threads) {
  return Emulator(s).run_batch(xs, threads);
}

// ---------------------------------------------------------------------------

namespace {

double rounding_bound(const PipelineProgram& p) {
  double bound = 0;
  if (p.frac_bits == 0) return 0;
  for (const auto& s : p.combine.sums)
    bound = std::max(bound, 0.5 * static_cast<double>(s.addends.size() + (s.has_constant ? 1 : 0)));
  return bound;
}

}  // namespace

EquivalenceReport check_equivalence(const Model& model, const StagedProgram& s, const EquivalenceOptions& o) {
  const auto& pf = s.program.features;
  if (pf.size() != model.features.size()) throw FeatureError("model and program have different feature counts");
  for (std::size_t i = 0; i < pf.size(); ++i)
    if (pf[i].name != model.features[i].name || pf[i].width_bits != model.features[i].width_bits)
      throw FeatureError("feature '" + model.features[i].name + "' differs between model and program");
  Emulator emu(s);

  std::uint64_t n = o.samples;
  int total_bits = 0;
  for (const auto& f : pf) total_bits += f.width_bits;
  if (o.exhaustive) {
    if (total_bits > 62 || (std::uint64_t{1} << total_bits) > o.domain_guard)
      throw DomainTooLargeError("exhaustive domain of 2^" + std::to_string(total_bits) + " inputs exceeds the guard of " +
                                std::to_string(o.domain_guard));
    n = std::uint64_t{1} << total_bits;
  }
  std::vector<FeatureVector> sampled;
  if (!o.exhaustive) {
    Rng rng(o.seed);
    sampled.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      FeatureVector x(pf.size());
      for (std::size_t f = 0; f < pf.size(); ++f) x[f] = rng.below(pf[f].domain_size());
      sampled.push_back(std::move(x));
    }
  }
  auto input = [&](std::uint64_t idx) {
    if (!o.exhaustive) return sampled[idx];
    FeatureVector x(pf.size());
    for (std::size_t f = pf.size(); f-- > 0;) {
      x[f] = idx & pf[f].max_value();
      idx >>= pf[f].width_bits;
    }
    return x;
  };

  const Real scale = boost::multiprecision::ldexp(Real(1), s.program.frac_bits);
  const double bound = rounding_bound(s.program);
  const int threads = resolve_threads(o.threads, n);
  std::vector<EquivalenceReport> parts(threads);
  parallel_chunks(n, threads, [&](std::size_t b, std::size_t e, int t) {
    auto& r = parts[t];
    for (std::size_t i = b; i < e; ++i) {
      FeatureVector x = input(i);
      Prediction want = evaluate_direct(model, x);
      Prediction got = emu.run(x);
      ++r.inputs;
      bool tie = want.tie || got.tie;
      if (tie) ++r.tie_count;
      if (want.class_id != got.class_id) {
        ++r.mismatch_count;
        if (tie) ++r.tie_mismatches;
        if (r.mismatches.size() < o.max_recorded) r.mismatches.push_back({x, want.class_id, got.class_id, tie});
      }
      if (want.raw.size() == got.raw.size()) {
        double worst = 0;
        for (std::size_t j = 0; j < want.raw.size(); ++j) {
          Real target = want.raw[j] * scale;
          double dev = to_double(Real(abs(got.raw[j] - target)));
          worst = std::max(worst, dev);
          if (abs(want.raw[j]) >= Real(o.relative_floor))
            r.max_relative_error = std::max(r.max_relative_error, to_double(Real(dev / abs(target))));
        }
        r.max_score_deviation = std::max(r.max_score_deviation, worst);
        if (worst > bound + 1e-9) ++r.bound_violations;
      }
      r.max_confidence_deviation =
          std::max(r.max_confidence_deviation, to_double(Real(abs(got.confidence - want.confidence))));
    }
  });
  EquivalenceReport out;
  out.mode = o.exhaustive ? "exhaustive" : "sample";
  out.score_bound = bound;
  for (auto& r : parts) {
    out.inputs += r.inputs;
    out.mismatch_count += r.mismatch_count;
    out.tie_count += r.tie_count;
    out.tie_mismatches += r.tie_mismatches;
    out.bound_violations += r.bound_violations;
    out.max_score_deviation = std::max(out.max_score_deviation, r.max_score_deviation);
    out.max_relative_error = std::max(out.max_relative_error, r.max_relative_error);
    out.max_confidence_deviation = std::max(out.max_confidence_deviation, r.max_confidence_deviation);
    for (auto& m : r.mismatches)
      if (out.mismatches.size() < o.max_recorded) out.mismatches.push_back(std::move(m));
  }
  return out;
}

std::string equivalence_json(const EquivalenceReport& r) {
  json mism = json::array();
  for (const auto& m : r.mismatches)
    mism.push_back({{"input", m.x}, {"oracle", m.oracle_class}, {"pipeline", m.pipeline_class}, {"tie", m.tie}});
  json j = {{"schema", 1},
            {"mode", r.mode},
            {"inputs", r.inputs},
            {"mismatches", r.mismatch_count},
            {"ties", r.tie_count},
            {"tie_mismatches", r.tie_mismatches},
            {"non_tie_mismatches", r.mismatch_count - r.tie_mismatches},
            {"max_score_deviation", r.max_score_deviation},
            {"score_bound", r.score_bound},
            {"bound_violations", r.bound_violations},
            {"max_relative_error", r.max_relative_error},
            {"max_confidence_deviation", r.max_confidence_deviation},
            {"recorded", mism}};
  return j.dump(2) + "\n";
}

PipelineProgram expand_ranges_exact(const PipelineProgram& p, std::uint64_t max_entries) {
  PipelineProgram out = p;
  for (auto& t : out.tables) {
    if (t.kind != MatchKind::range || t.keys.size() != 1) continue;
    if ((std::uint64_t{1} << std::min(t.keys[0].width, 63)) > max_entries)
      throw DomainTooLargeError("table '" + t.name + "' is too wide to expand exactly");
    std::vector<Entry> entries;
    for (const auto& e : t.entries)
      for (std::uint64_t v = e.key[0].value;; ++v) {
        entries.push_back({{{v, 0, 0}}, e.action});
        if (v == e.key[0].hi) break;
      }
    t.kind = MatchKind::exact;
    t.entries = std::move(entries);
    canonicalize(t);
  }
  return out;
}

}  // namespace inml
