#pragma once

#include "ilmtr/bench.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ilmtr {

enum class BabiTask { qa1, qa2, qa3, qa4, qa5 };

const char* to_string(BabiTask task);
std::optional<BabiTask> parse_babi_task(std::string_view text);

struct BabiStory {
    BabiTask task = BabiTask::qa1;
    std::vector<std::string> facts;
    std::string question;
    std::string answer;

    bool operator==(const BabiStory&) const = default;
};

// One event of the small world the stories are drawn from.
struct BabiEvent {
    enum class Kind { move, grab, drop, give, relation };
    Kind kind = Kind::move;
    std::string actor;
    // Location for move, object for grab/drop/give, first place for relation.
    std::string target;
    // Receiver for give, second place for relation.
    std::string other;
    // Surface verb, e.g. "journeyed to", "picked up", "north of".
    std::string verb;
    // Appended before the final period ("there" in "dropped the milk there").
    std::string suffix;
};

std::string render_event(const BabiEvent& e);

// Tracks where people and objects are. Objects follow whoever holds them;
// positions that were never observed stay unknown.
class BabiWorld {
public:
    void apply(const BabiEvent& e);

    std::optional<std::string> person_location(const std::string& person) const;
    std::optional<std::string> object_location(const std::string& object) const;
    // Distinct successive known locations of the object, oldest first.
    std::vector<std::string> object_history(const std::string& object) const;
    std::optional<std::string> last_giver(const std::string& object, const std::string& receiver) const;

private:
    struct Object {
        std::optional<std::string> holder;
        std::optional<std::string> location;
        std::vector<std::string> history;
    };
    void place(Object& o, const std::string& loc);

    std::map<std::string, std::string> people_;
    std::map<std::string, Object> objects_;
    // (object, receiver) -> giver
    std::map<std::pair<std::string, std::string>, std::string> gifts_;
};

// Seeded story for the task. Every story's question is answerable from its
// facts and the answer is a single word.
BabiStory make_babi_story(BabiTask task, std::uint64_t seed);

// Fourteen-fact qa3 story about Mary's apple; answer "kitchen".
BabiStory reference_qa3_story();

// Scatters the facts (in order) over seeded sentence boundaries of the
// truncated filler.
NiahCase embed_story(const BabiStory& story, std::string_view filler, std::size_t target_tokens, std::uint64_t seed);

NiahCase generate_babilong_like(BabiTask task, std::string_view filler, std::size_t target_tokens,
                                std::uint64_t seed);

}  // namespace ilmtr
