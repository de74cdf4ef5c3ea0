#pragma once

// Level-3 message logs: CSV (seq,ts_ns,kind,order_id,side,price_ticks,size,exec_size)
// or newline-delimited JSON objects with the same keys.

#include <cctype>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lobfill/order_book.hpp"
#include "lobfill/text.hpp"

namespace lobfill {

constexpr std::string_view kMessageCsvHeader = "seq,ts_ns,kind,order_id,side,price_ticks,size,exec_size";

constexpr std::string_view to_string(MessageKind k) {
  switch (k) {
    case MessageKind::Add: return "add";
    case MessageKind::Cancel: return "cancel";
    case MessageKind::Execute: return "execute";
  }
  return "?";
}

constexpr std::string_view to_string(Side s) { return s == Side::Bid ? "bid" : "ask"; }

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline MessageKind parse_kind(std::string_view s) {
  const std::string k = lower(text::trim(s));
  if (k == "add" || k == "a") return MessageKind::Add;
  if (k == "cancel" || k == "c" || k == "delete" || k == "d") return MessageKind::Cancel;
  if (k == "execute" || k == "e" || k == "exec" || k == "fill") return MessageKind::Execute;
  fail(ErrorCode::ParseError, "unknown message kind '" + std::string(s) + "'");
}

inline Side parse_side(std::string_view s) {
  const std::string k = lower(text::trim(s));
  if (k == "bid" || k == "b" || k == "buy") return Side::Bid;
  if (k == "ask" || k == "a" || k == "s" || k == "sell") return Side::Ask;
  fail(ErrorCode::ParseError, "unknown side '" + std::string(s) + "'");
}

inline std::vector<Level3Message> parse_messages_csv(std::string_view content) {
  auto rows = text::lines(content);
  if (rows.empty()) return {};
  text::Header h(rows.front());
  const std::size_t iseq = h.index("seq"), its = h.index("ts_ns"), ikind = h.index("kind"),
                    iid = h.index("order_id"), iside = h.index("side"),
                    iprice = h.index("price_ticks"), isize = h.index("size"),
                    iexec = h.index("exec_size");
  std::vector<Level3Message> out;
  out.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    auto f = text::split(rows[r]);
    if (f.size() != h.size()) {
      fail(ErrorCode::ParseError, "row " + std::to_string(r) + " has " + std::to_string(f.size()) +
                                      " fields, expected " + std::to_string(h.size()));
    }
    Level3Message m;
    m.seq = text::parse_int<std::uint64_t>(f[iseq]);
    m.ts_ns = text::parse_int<std::int64_t>(f[its]);
    m.kind = parse_kind(f[ikind]);
    m.order_id = text::parse_int<OrderId>(f[iid]);
    m.side = parse_side(f[iside]);
    m.price = text::parse_int<Ticks>(f[iprice]);
    m.size = f[isize].empty() ? 0.0 : text::parse_double(f[isize]);
    m.exec_size = f[iexec].empty() ? 0.0 : text::parse_double(f[iexec]);
    out.push_back(m);
  }
  return out;
}

inline std::vector<Level3Message> parse_messages_ndjson(std::string_view content) {
  std::vector<Level3Message> out;
  std::size_t line_no = 0;
  for (auto line : text::lines(content)) {
    ++line_no;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    Level3Message m;
    try {
      m.seq = j.at("seq").get<std::uint64_t>();
      m.ts_ns = j.at("ts_ns").get<std::int64_t>();
      m.kind = parse_kind(j.at("kind").get<std::string>());
      m.order_id = j.at("order_id").get<OrderId>();
      m.side = parse_side(j.at("side").get<std::string>());
      m.price = j.at("price_ticks").get<Ticks>();
      m.size = j.value("size", 0.0);
      m.exec_size = j.value("exec_size", 0.0);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(m);
  }
  return out;
}

/// Picks the parser from the file extension (.ndjson/.jsonl/.json -> JSON).
inline std::vector<Level3Message> read_messages(const std::string& path) {
  const std::string content = text::read_file(path);
  const auto ext = path.substr(path.find_last_of('.') + 1);
  if (ext == "ndjson" || ext == "jsonl" || ext == "json") return parse_messages_ndjson(content);
  return parse_messages_csv(content);
}

inline std::string format_messages_csv(const std::vector<Level3Message>& msgs) {
  std::string out(kMessageCsvHeader);
  out += '\n';
  for (const auto& m : msgs) {
    out += std::to_string(m.seq);
    out += ',';
    out += std::to_string(m.ts_ns);
    out += ',';
    out += to_string(m.kind);
    out += ',';
    out += std::to_string(m.order_id);
    out += ',';
    out += to_string(m.side);
    out += ',';
    out += std::to_string(m.price);
    out += ',';
    out += text::format_double(m.size);
    out += ',';
    out += text::format_double(m.exec_size);
    out += '\n';
  }
  return out;
}

/// Outcome of replaying a stream through the book with every error counted
/// rather than raised. A gap is accepted and the replay continues.
struct ReplaySummary {
  std::uint64_t messages = 0;
  std::uint64_t adds = 0;
  std::uint64_t cancels = 0;
  std::uint64_t executes = 0;
  std::uint64_t sequence_gaps = 0;
  std::map<std::string, std::uint64_t> errors;
  std::vector<std::string> first_errors;  // at most kMaxListed
  std::uint64_t one_sided = 0;
  TopOfBook final_top;

  static constexpr std::size_t kMaxListed = 20;

  std::uint64_t error_count() const {
    std::uint64_t n = 0;
    for (const auto& [_, c] : errors) n += c;
    return n;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["messages"] = messages;
    j["adds"] = adds;
    j["cancels"] = cancels;
    j["executes"] = executes;
    j["sequence_gaps"] = sequence_gaps;
    j["errors"] = errors;
    j["error_count"] = error_count();
    j["first_errors"] = first_errors;
    j["one_sided_after_message"] = one_sided;
    j["final_best_bid"] = final_top.best_bid ? nlohmann::json(*final_top.best_bid) : nlohmann::json(nullptr);
    j["final_best_ask"] = final_top.best_ask ? nlohmann::json(*final_top.best_ask) : nlohmann::json(nullptr);
    return j;
  }
};

inline ReplaySummary replay_stream(std::span<const Level3Message> stream, CrossingPolicy policy = CrossingPolicy::Reject) {
  if (stream.empty()) fail(ErrorCode::EmptyStream, "no messages to replay");
  OrderBook book(policy);
  ReplaySummary s;
  auto record = [&s](const Error& e, std::uint64_t seq) {
    ++s.errors[std::string(to_string(e.code()))];
    if (s.first_errors.size() < ReplaySummary::kMaxListed) {
      s.first_errors.push_back("seq " + std::to_string(seq) + ": " + e.what());
    }
  };
  for (const auto& m : stream) {
    ++s.messages;
    switch (m.kind) {
      case MessageKind::Add: ++s.adds; break;
      case MessageKind::Cancel: ++s.cancels; break;
      case MessageKind::Execute: ++s.executes; break;
    }
    const auto last = book.last_seq();
    if (last && m.seq > *last + 1) {
      ++s.sequence_gaps;
      book.resync(m.seq);
    }
    try {
      book.apply(m);
    } catch (const Error& e) {
      record(e, m.seq);
      if (!last || m.seq > *last) book.resync(m.seq + 1);
    }
    if (!book.top().two_sided()) ++s.one_sided;
  }
  s.final_top = book.top();
  return s;
}

}  // namespace lobfill
