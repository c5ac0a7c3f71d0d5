#include "ilmtr/babilong.hpp"

#include "ilmtr/rng.hpp"

#include <algorithm>
#include <array>
#include <numeric>

namespace ilmtr {
namespace {

constexpr std::array<const char*, 4> kPeople{"Mary", "John", "Daniel", "Sandra"};
constexpr std::array<const char*, 6> kPlaces{"bathroom", "hallway", "kitchen", "office", "bedroom", "garden"};
constexpr std::array<const char*, 3> kObjects{"apple", "milk", "football"};
constexpr std::array<const char*, 5> kMoveVerbs{"moved to", "went to", "journeyed to", "travelled to", "went back to"};
constexpr std::array<const char*, 4> kGrabVerbs{"picked up", "grabbed", "got", "took"};
constexpr std::array<std::pair<const char*, const char*>, 3> kDropVerbs{
    {{"put down", ""}, {"discarded", "there"}, {"dropped", ""}}};
constexpr std::array<const char*, 4> kDirections{"north", "south", "east", "west"};

template <std::size_t N>
std::string pick(Rng& rng, const std::array<const char*, N>& from) {
    return from[rng.below(N)];
}

BabiEvent move(std::string actor, std::string place, std::string verb) {
    return {BabiEvent::Kind::move, std::move(actor), std::move(place), {}, std::move(verb), {}};
}
BabiEvent grab(std::string actor, std::string object, std::string verb) {
    return {BabiEvent::Kind::grab, std::move(actor), std::move(object), {}, std::move(verb), {}};
}
BabiEvent drop(std::string actor, std::string object, std::string verb, std::string suffix = {}) {
    return {BabiEvent::Kind::drop, std::move(actor), std::move(object), {}, std::move(verb), std::move(suffix)};
}

// Random but consistent event stream: objects are only grabbed when free
// and only dropped or given by their holder.
std::vector<BabiEvent> random_events(Rng& rng, std::size_t count, bool with_gives) {
    std::vector<BabiEvent> events;
    std::map<std::string, std::string> holder;
    while (events.size() < count) {
        const auto actor = pick(rng, kPeople);
        const auto roll = rng.below(with_gives ? 4 : 3);
        std::vector<std::string> held, free;
        for (const char* o : kObjects) {
            auto it = holder.find(o);
            if (it == holder.end()) free.emplace_back(o);
            else if (it->second == actor) held.emplace_back(o);
        }
        if (roll == 0 || (roll == 1 && free.empty()) || (roll >= 2 && held.empty())) {
            events.push_back(move(actor, pick(rng, kPlaces), pick(rng, kMoveVerbs)));
        } else if (roll == 1) {
            const auto obj = free[rng.below(free.size())];
            holder[obj] = actor;
            events.push_back(grab(actor, obj, pick(rng, kGrabVerbs)));
        } else if (roll == 2) {
            const auto obj = held[rng.below(held.size())];
            holder.erase(obj);
            const auto& [verb, suffix] = kDropVerbs[rng.below(kDropVerbs.size())];
            events.push_back(drop(actor, obj, verb, suffix));
        } else {
            const auto obj = held[rng.below(held.size())];
            std::string receiver;
            do receiver = pick(rng, kPeople);
            while (receiver == actor);
            holder[obj] = receiver;
            events.push_back({BabiEvent::Kind::give, actor, obj, receiver, "gave", {}});
        }
    }
    return events;
}

std::vector<std::string> render_all(const std::vector<BabiEvent>& events) {
    std::vector<std::string> out;
    for (const auto& e : events) out.push_back(render_event(e));
    return out;
}

BabiWorld replay(const std::vector<BabiEvent>& events) {
    BabiWorld w;
    for (const auto& e : events) w.apply(e);
    return w;
}

}  // namespace

const char* to_string(BabiTask task) {
    switch (task) {
        case BabiTask::qa1: return "qa1";
        case BabiTask::qa2: return "qa2";
        case BabiTask::qa3: return "qa3";
        case BabiTask::qa4: return "qa4";
        case BabiTask::qa5: return "qa5";
    }
    return "?";
}

std::optional<BabiTask> parse_babi_task(std::string_view text) {
    for (auto t : {BabiTask::qa1, BabiTask::qa2, BabiTask::qa3, BabiTask::qa4, BabiTask::qa5})
        if (text == to_string(t)) return t;
    return std::nullopt;
}

std::string render_event(const BabiEvent& e) {
    std::string s;
    switch (e.kind) {
        case BabiEvent::Kind::move:
        case BabiEvent::Kind::grab:
        case BabiEvent::Kind::drop:
            s = e.actor + " " + e.verb + " the " + e.target;
            break;
        case BabiEvent::Kind::give:
            s = e.actor + " gave the " + e.target + " to " + e.other;
            break;
        case BabiEvent::Kind::relation:
            s = "The " + e.actor + " is " + e.verb + " the " + e.target;
            break;
    }
    if (!e.suffix.empty()) s += " " + e.suffix;
    return s + ".";
}

void BabiWorld::place(Object& o, const std::string& loc) {
    o.location = loc;
    if (o.history.empty() || o.history.back() != loc) o.history.push_back(loc);
}

void BabiWorld::apply(const BabiEvent& e) {
    auto here = [&](const std::string& who) -> std::optional<std::string> {
        auto it = people_.find(who);
        if (it == people_.end()) return std::nullopt;
        return it->second;
    };
    switch (e.kind) {
        case BabiEvent::Kind::move:
            people_[e.actor] = e.target;
            for (auto& [name, o] : objects_)
                if (o.holder == e.actor) place(o, e.target);
            break;
        case BabiEvent::Kind::grab: {
            auto& o = objects_[e.target];
            o.holder = e.actor;
            if (auto loc = here(e.actor)) place(o, *loc);
            break;
        }
        case BabiEvent::Kind::drop: {
            auto& o = objects_[e.target];
            o.holder.reset();
            if (auto loc = here(e.actor)) place(o, *loc);
            break;
        }
        case BabiEvent::Kind::give: {
            auto& o = objects_[e.target];
            o.holder = e.other;
            gifts_[{e.target, e.other}] = e.actor;
            if (auto loc = here(e.other)) place(o, *loc);
            break;
        }
        case BabiEvent::Kind::relation:
            break;
    }
}

std::optional<std::string> BabiWorld::person_location(const std::string& person) const {
    auto it = people_.find(person);
    if (it == people_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::string> BabiWorld::object_location(const std::string& object) const {
    auto it = objects_.find(object);
    if (it == objects_.end()) return std::nullopt;
    return it->second.location;
}

std::vector<std::string> BabiWorld::object_history(const std::string& object) const {
    auto it = objects_.find(object);
    if (it == objects_.end()) return {};
    return it->second.history;
}

std::optional<std::string> BabiWorld::last_giver(const std::string& object, const std::string& receiver) const {
    auto it = gifts_.find({object, receiver});
    if (it == gifts_.end()) return std::nullopt;
    return it->second;
}

BabiStory make_babi_story(BabiTask task, std::uint64_t seed) {
    Rng rng(seed);
    BabiStory story;
    story.task = task;

    if (task == BabiTask::qa4) {
        std::vector<std::string> places(kPlaces.begin(), kPlaces.end());
        for (std::size_t i = places.size(); i > 1; --i) std::swap(places[i - 1], places[rng.below(i)]);
        const std::string d1 = pick(rng, kDirections), d2 = pick(rng, kDirections);
        std::vector<BabiEvent> facts{
            {BabiEvent::Kind::relation, places[0], places[1], {}, d1 + " of", {}},
            {BabiEvent::Kind::relation, places[2], places[0], {}, d2 + " of", {}},
        };
        if (rng.below(2)) std::swap(facts[0], facts[1]);
        story.facts = render_all(facts);
        if (rng.below(2)) {
            story.question = "What is " + d1 + " of the " + places[1] + "?";
            story.answer = places[0];
        } else {
            story.question = "What is " + d2 + " of the " + places[0] + "?";
            story.answer = places[2];
        }
        return story;
    }

    // Draw event streams until one supports a question for the task.
    for (;;) {
        const std::size_t count = task == BabiTask::qa1 ? 2 + rng.below(4) : 6 + rng.below(8);
        const auto events = random_events(rng, count, task == BabiTask::qa5);
        const auto world = replay(events);

        if (task == BabiTask::qa1) {
            std::vector<std::string> movers;
            for (const auto& e : events)
                if (e.kind == BabiEvent::Kind::move &&
                    std::find(movers.begin(), movers.end(), e.actor) == movers.end())
                    movers.push_back(e.actor);
            if (movers.empty()) continue;
            const auto who = movers[rng.below(movers.size())];
            story.question = "Where is " + who + "?";
            story.answer = *world.person_location(who);
        } else if (task == BabiTask::qa2) {
            std::vector<std::string> known;
            for (const char* o : kObjects)
                if (world.object_location(o)) known.emplace_back(o);
            if (known.empty()) continue;
            const auto obj = known[rng.below(known.size())];
            story.question = "Where is the " + obj + "?";
            story.answer = *world.object_location(obj);
        } else if (task == BabiTask::qa3) {
            std::vector<std::string> moved;
            for (const char* o : kObjects)
                if (world.object_history(o).size() >= 2) moved.emplace_back(o);
            if (moved.empty()) continue;
            const auto obj = moved[rng.below(moved.size())];
            const auto h = world.object_history(obj);
            story.question = "Where was the " + obj + " before the " + h.back() + "?";
            story.answer = h[h.size() - 2];
        } else {
            std::vector<std::pair<std::string, std::string>> given;
            for (const auto& e : events)
                if (e.kind == BabiEvent::Kind::give) given.emplace_back(e.target, e.other);
            if (given.empty()) continue;
            const auto [obj, receiver] = given[rng.below(given.size())];
            story.question = "Who gave the " + obj + " to " + receiver + "?";
            story.answer = *world.last_giver(obj, receiver);
        }
        story.facts = render_all(events);
        return story;
    }
}

BabiStory reference_qa3_story() {
    const std::vector<BabiEvent> events{
        grab("Daniel", "milk", "grabbed"),
        grab("Mary", "apple", "picked up"),
        move("Sandra", "hallway", "went back to"),
        move("Daniel", "hallway", "journeyed to"),
        move("John", "bedroom", "moved to"),
        move("John", "bathroom", "went to"),
        drop("Daniel", "milk", "discarded", "there"),
        move("Mary", "kitchen", "moved to"),
        move("Mary", "office", "journeyed to"),
        grab("Daniel", "milk", "got"),
        move("John", "garden", "moved to"),
        move("Sandra", "kitchen", "travelled to"),
        drop("Mary", "apple", "put down"),
        grab("John", "football", "took"),
    };
    const auto h = replay(events).object_history("apple");
    BabiStory story;
    story.task = BabiTask::qa3;
    story.facts = render_all(events);
    story.question = "Where was the apple before the " + h.back() + "?";
    story.answer = h[h.size() - 2];
    return story;
}

NiahCase embed_story(const BabiStory& story, std::string_view filler, std::size_t target_tokens,
                     std::uint64_t seed) {
    auto sentences = truncate_corpus(filler, target_tokens);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> boundaries;
    for (std::size_t i = 0; i < story.facts.size(); ++i) boundaries.push_back(rng.below(sentences.size() + 1));
    std::sort(boundaries.begin(), boundaries.end());

    auto c = insert_needles(sentences, story.facts, boundaries);
    c.task = to_string(story.task);
    c.id = c.task + "-" + std::to_string(target_tokens) + "-s" + std::to_string(seed);
    c.target_tokens = target_tokens;
    c.question = story.question;
    c.expected_keywords = {story.answer};
    const double mean = std::accumulate(c.insertion_offsets.begin(), c.insertion_offsets.end(), 0.0) /
                        static_cast<double>(c.insertion_offsets.size());
    c.depth_percent = c.haystack_tokens ? std::clamp(100.0 * mean / c.haystack_tokens, 0.0, 100.0) : 0.0;
    return c;
}

NiahCase generate_babilong_like(BabiTask task, std::string_view filler, std::size_t target_tokens,
                                std::uint64_t seed) {
    return embed_story(make_babi_story(task, seed), filler, target_tokens, seed);
}

}  // namespace ilmtr
