#include <algorithm>
#include <cmath>

#include "roadalarm/world.hpp"

namespace roadalarm {

namespace {

bool within(const AdversaryConfig& a, double t) { return t >= a.start && t < a.start + a.duration; }

}  // namespace

void World::build_adversaries() {
  for (std::size_t i = 0; i < sc_.adversaries.size(); ++i) {
    const auto& a = sc_.adversaries[i];
    switch (a.kind) {
      case AdversaryKind::Forge:
        if (!forger_) forger_ = std::make_unique<Forger>(seed_for("forger"));
        break;
      case AdversaryKind::DosFlood:
        if (!forger_) forger_ = std::make_unique<Forger>(seed_for("forger"));
        if (!flood_envelope_) {
          const auto& seg = sc_.network.segment(a.segment);
          const VeStateMsg junk = botnet_report(AdversaryConfig{}, seg, sc_.variant, seg.mrsu_id, 0, a.start);
          flood_envelope_ = forger_->uncertified(encode_message(junk), a.start, ca_->id());
        }
        break;
      case AdversaryKind::Botnet: {
        auto& members = botnets_[i];
        for (std::size_t m = 0; m < a.members; ++m) {
          const std::string id = "bot-" + std::to_string(i) + "-" + std::to_string(m);
          BotnetMember b;
          b.hsm = std::make_unique<Hsm>(id, seed_for(id));
          b.credential = ca_->register_vehicle(id, *b.hsm, 0);
          b.pseudonyms = ca_->issue_pseudonyms(b.credential, *b.hsm, 1, 0);
          members.push_back(std::move(b));
        }
        break;
      }
      case AdversaryKind::Replay:
      case AdversaryKind::Jam:
        break;
    }
  }
}

void World::capture(const SignedEnvelope& env, const std::string& mrsu_id) {
  for (std::size_t i = 0; i < sc_.adversaries.size(); ++i) {
    const auto& a = sc_.adversaries[i];
    if (a.kind != AdversaryKind::Replay || !within(a, clock_)) continue;
    const auto& seg = sc_.network.segment(a.segment);
    if (seg.mrsu_id != mrsu_id) continue;
    const auto msg = decode_as<VeStateMsg>(env.payload);
    if (!msg || msg->mrsu_addr != mrsu_id) continue;
    auto& log = captured_[i];
    if (log.size() >= a.count) continue;
    const ReplayKind kind = replay_kind(log.size(), a.fast_fraction);
    log.push_back(CapturedEnvelope{env, clock_});
    const double stale = a.stale_delay > 0 ? a.stale_delay : sc_.timing.freshness_window + 1.0;
    const double at = clock_ + (kind == ReplayKind::Fast ? a.fast_delay : stale);
    const std::string tag = kind == ReplayKind::Fast ? "replay/fast" : "replay/stale";
    Mrsu* target = mrsus_.at(a.segment).get();
    schedule(at, [this, target, env, tag] {
      metrics_.count("attack.replay");
      const double done = target->schedule_verification(clock_);
      schedule(done, [this, target, env, tag] { ingest(*target, env, tag); });
    });
  }
}

void World::attack_tick() {
  const double dt = sc_.tick;
  for (std::size_t i = 0; i < sc_.adversaries.size(); ++i) {
    const auto& a = sc_.adversaries[i];
    if (a.kind == AdversaryKind::Jam || a.kind == AdversaryKind::Replay || !within(a, clock_)) continue;
    const auto& seg = sc_.network.segment(a.segment);
    Mrsu* target = mrsus_.at(a.segment).get();

    switch (a.kind) {
      case AdversaryKind::Forge: {
        // Cycles through the three forgeries at `rate` per second, `count` total.
        std::size_t& sent = forged_sent_[i];
        const auto due = static_cast<std::size_t>(std::floor((clock_ - a.start + dt) * a.rate + 1e-9));
        while (sent < std::min(due, a.count)) {
          const int lane = seg.lanes.front().lid;
          AdversaryConfig fake = a;
          fake.lane = lane;
          const double along = seg.length() / 2;
          const Bytes status = encode_message(botnet_report(fake, seg, sc_.variant, seg.mrsu_id, along, clock_));
          switch (sent % 3) {
            case 0: {
              const auto env = forger_->uncertified(status, clock_, ca_->id());
              const double done = target->schedule_verification(clock_);
              schedule(done, [this, target, env] { ingest(*target, env, "forge/uncertified"); });
              break;
            }
            case 1: {
              auto stolen = last_pseudonym_cert_.find(a.segment);
              const auto env = stolen == last_pseudonym_cert_.end()
                                   ? forger_->uncertified(status, clock_, ca_->id())
                                   : forger_->mismatched(status, stolen->second, clock_);
              const double done = target->schedule_verification(clock_);
              schedule(done, [this, target, env] { ingest(*target, env, "forge/mismatch"); });
              break;
            }
            default: {
              CongestionAlert alert;
              alert.rid = seg.rid;
              alert.lane = lane;
              alert.center = along;
              alert.vehicle_count = static_cast<std::uint32_t>(sc_.detection.n_min);
              alert.timestamp = clock_;
              const auto env = forger_->uncertified(encode_message(alert), clock_, ca_->id());
              for (const auto& iid : {seg.from_intersection, seg.to_intersection})
                if (lbs_.count(iid)) schedule(clock_, [this, iid, env] { deliver_alert(iid, env, 0, "forge/alert"); });
              break;
            }
          }
          ++sent;
          metrics_.count("attack.forge");
        }
        break;
      }
      case AdversaryKind::DosFlood: {
        std::size_t& sent = forged_sent_[i];
        const auto due = static_cast<std::size_t>(std::floor((clock_ - a.start + dt) * a.rate + 1e-9));
        const auto env = *flood_envelope_;
        for (; sent < due; ++sent) {
          const double done = target->schedule_verification(clock_);
          schedule(done, [this, target, env] { ingest(*target, env, "dos"); });
        }
        metrics_.counters["attack.dos"] = sent;
        break;
      }
      case AdversaryKind::Botnet: {
        // Members report together once per status period.
        const double phase = std::fmod(clock_ - a.start, sc_.timing.status_period);
        if (phase > 1e-9 && sc_.timing.status_period - phase > 1e-9) break;
        auto& members = botnets_[i];
        for (std::size_t m = 0; m < members.size(); ++m) {
          auto& b = members[m];
          const double along = a.center + (static_cast<double>(m) - members.size() / 2.0) * 3.0;
          const Bytes payload = encode_message(botnet_report(a, seg, sc_.variant, seg.mrsu_id, along, clock_));
          b.hsm->advance_clock(clock_);
          const auto env = b.hsm->sign(b.pseudonyms.front().key_ref, payload);
          const double done = target->schedule_verification(clock_);
          schedule(done, [this, target, env] { ingest(*target, env, "botnet"); });
          metrics_.count("attack.botnet");
        }
        break;
      }
      case AdversaryKind::Replay:
      case AdversaryKind::Jam:
        break;
    }
  }
}

}  // namespace roadalarm
