#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lingua_spoof/error.hpp"
#include "lingua_spoof/oracle.hpp"
#include "lingua_spoof/transcript.hpp"
#include "lingua_spoof/wordnet.hpp"

namespace lingua_spoof {

inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    fail(ErrorCode::DimensionMismatch, std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) fail(ErrorCode::ZeroVector, "cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

enum class PosEvidence { WordNet, Annotator };

struct SimPolicy {
  double delta = 0.84;
  bool require_pos_match = true;
  bool skip_stopwords = true;
  PosEvidence pos_source = PosEvidence::WordNet;

  friend bool operator==(const SimPolicy&, const SimPolicy&) = default;
};

inline void validate(const SimPolicy& p) {
  if (!(p.delta >= 0.0 && p.delta <= 1.0)) fail(ErrorCode::InvalidArgument, "delta outside [0,1]");
}

struct ConstraintVerdict {
  bool passed = false;
  double cosine = 0.0;
  bool pos_ok = false;
  std::string reason;  // empty, "pos" or "cosine"
};

inline ConstraintVerdict make_verdict(double cosine, bool pos_ok, const SimPolicy& policy) {
  ConstraintVerdict v;
  v.cosine = cosine;
  v.pos_ok = pos_ok;
  v.passed = pos_ok && cosine >= policy.delta;
  if (!pos_ok) {
    v.reason = "pos";
  } else if (!v.passed) {
    v.reason = "cosine";
  }
  return v;
}

// Oracles and lexicon a SIM check may consult.
struct SimContext {
  Gateway& gateway;
  const Lexicon* lexicon = nullptr;
};

inline bool shares_wordnet_pos(const Lexicon& lex, std::string_view a, std::string_view b) {
  auto pa = pos_of(lex, a);
  auto pb = pos_of(lex, b);
  return std::any_of(pa.begin(), pa.end(), [&](PosCategory p) { return pb.count(p) != 0; });
}

inline ConstraintVerdict check_sim(const Transcript& orig, const Transcript& pert,
                                   const SimPolicy& policy, SimContext ctx) {
  validate(policy);
  if (orig.size() != pert.size()) {
    fail(ErrorCode::LengthMismatch,
         std::to_string(orig.size()) + " vs " + std::to_string(pert.size()) + " tokens");
  }
  std::vector<std::size_t> changed;
  for (std::size_t i = 0; i < orig.size(); ++i) {
    if (to_lower(orig[i].surface) != to_lower(pert[i].surface)) changed.push_back(i);
  }

  bool pos_ok = true;
  if (policy.require_pos_match && !changed.empty()) {
    if (policy.pos_source == PosEvidence::Annotator) {
      auto ta = ctx.gateway.aux_annotations(orig.raw()).pos_tags;
      auto tb = ctx.gateway.aux_annotations(pert.raw()).pos_tags;
      if (ta.size() != orig.size() || tb.size() != pert.size()) {
        fail(ErrorCode::MalformedResponse, "pos_tags do not align with tokens");
      }
      for (auto i : changed) pos_ok = pos_ok && ta[i] == tb[i];
    } else {
      if (ctx.lexicon == nullptr) fail(ErrorCode::InvalidArgument, "POS check needs a lexicon");
      for (auto i : changed) {
        pos_ok = pos_ok && shares_wordnet_pos(*ctx.lexicon, orig[i].surface, pert[i].surface);
      }
    }
  }

  double cosine = 1.0;
  if (orig.raw() != pert.raw()) {
    auto u = ctx.gateway.text_embed(orig.raw());
    auto v = ctx.gateway.text_embed(pert.raw());
    cosine = cosine_similarity(u, v);
  }
  return make_verdict(cosine, pos_ok, policy);
}

}  // namespace lingua_spoof
