"""Regenerate the bundled catalog and query sets under src/featsearch/data.

    python scripts/make_fixtures.py

Sentence queries are produced by slotting per-feature intent phrases into a
small set of question templates, cycling templates deterministically.
"""

import json
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "src" / "featsearch" / "data"

# id, path, hint, descriptions, relaxed keyword queries, sentence intents
FEATURES = [
    ("display.brightness", ["Display", "Brightness"],
     "Adjust the brightness of the screen",
     ["Drag the slider to make the screen dimmer or brighter.",
      "Lower the light level of the display in a dark room."],
     ["dim, bright"],
     ["dim the screen", "make the display less bright in a dark room"]),
    ("display.adaptive_brightness", ["Display", "Adaptive brightness"],
     "Automatically adjust screen brightness based on lighting conditions",
     ["The ambient light sensor changes the light level for you when you move from sunlight to shade."],
     ["auto brightness, light sensor"],
     ["let the sensor change the light level when I go outside in sunlight", "stop the display getting darker in the shade by itself"]),
    ("display.eye_comfort", ["Display", "Eye comfort shield"],
     "Keep your eyes comfortable by limiting blue light",
     ["Lowers eye fatigue when you look at the phone late in the evening or in a dim room."],
     ["blue light filter, night light"],
     ["prevent strain on my eyes at night", "use a warmer yellow tint and less blue at night"]),
    ("display.dark_mode", ["Display", "Dark mode"],
     "Apply a dark theme to your screen and apps",
     ["Dark mode uses black backgrounds to reduce glare and save battery.",
      "Switch the interface from white to a black theme."],
     ["night theme, black background"],
     ["get a black background instead of white", "change the white theme to black"]),
    ("display.font_size", ["Display", "Font size and style"],
     "Change the size and style of the text",
     ["Make letters bigger or smaller so text is easier to read.",
      "Choose a bold typeface for words on the screen."],
     ["text size, letters, bold"],
     ["make the letters bigger because they are too small", "read words more easily with bigger letters"]),
    ("display.screen_zoom", ["Display", "Screen zoom"],
     "Make items on the screen bigger or smaller",
     ["Zoom in to enlarge icons, buttons, and menus."],
     ["enlarge icons, zoom"],
     ["enlarge icons and buttons", "make the menus and icons larger"]),
    ("display.screen_timeout", ["Display", "Screen timeout"],
     "Choose how long the screen stays on before turning off",
     ["The display turns off automatically after a period of inactivity.",
      "Keep the screen awake for longer while reading."],
     ["screen off delay, sleep"],
     ["keep the display awake for longer while reading", "stop the display turning off after a few seconds of inactivity"]),
    ("display.touch", ["Display", "Touch sensitivity"],
     "Increase the touch sensitivity of the screen for use with screen protectors",
     ["Turn this on if touch is not working properly after you attach a protector film.",
      "Taps do not register well through a thick glass protector."],
     ["mistouch, block touch"],
     ["fix taps when touch is not working properly", "fix taps that do not register through a glass protector film"]),
    ("display.motion_smoothness", ["Display", "Motion smoothness"],
     "Use a higher refresh rate for smoother animations and scrolling",
     ["Choose adaptive 120 Hz for fluid scrolling or standard 60 Hz for a lower refresh rate."],
     ["refresh rate, 120 hz"],
     ["get fluid scrolling with 120 hz", "lower the refresh rate to 60 hz"]),
    ("sounds.notification_sound", ["Sounds and vibration", "Notification sound"],
     "Choose the sound played when notifications arrive",
     ["Pick an alert tone for incoming messages and app notifications."],
     ["alert tone, message tone"],
     ["change the alert tone for incoming messages", "pick a different tone for app notifications"]),
    ("sounds.ringtone", ["Sounds and vibration", "Ringtone"],
     "Choose the sound for incoming calls",
     ["Set a melody that plays when someone calls you."],
     ["call melody, ring"],
     ["set a melody for when someone calls me", "change the song that plays for calls"]),
    ("sounds.volume", ["Sounds and vibration", "Volume"],
     "Adjust the volume for calls, media, and alerts",
     ["Make music, videos, and the ringer louder or quieter."],
     ["loudness, sound level"],
     ["make music and videos louder", "make the ringer quieter"]),
    ("sounds.adapt_sound", ["Sounds and vibration", "Sound quality and effects", "Adapt sound"],
     "Optimize sound for your hearing",
     ["Adapt sound customizes audio for each ear based on a short hearing test."],
     ["optimize sound, hearing test"],
     ["customize audio for each ear with a hearing test", "tune audio to my hearing"]),
    ("sounds.vibration_pattern", ["Sounds and vibration", "Vibration pattern"],
     "Choose how your phone vibrates for calls and notifications",
     ["Select a buzz rhythm so you can feel who is calling when the phone is silent."],
     ["buzz, vibrate"],
     ["change the buzz rhythm", "feel a different buzz when someone calls while silent"]),
    ("sounds.touch_feedback", ["Sounds and vibration", "System sound and vibration", "Touch feedback"],
     "Play sounds and vibrations when you tap the screen",
     ["Turn keyboard clicks and tap vibrations on or off."],
     ["tap sound, click sound"],
     ["turn off the keyboard clicks", "stop vibrations on every tap"]),
    ("access.sound_notifications", ["Accessibility", "Hearing enhancements", "Sound notifications"],
     "Get alerts when your phone detects sounds like a doorbell or a crying baby",
     ["Sound notifications listen for household noises such as alarms, knocking, or water running and show an alert.",
      "A type of notification that tells people who are hard of hearing about important noises."],
     ["doorbell alert, baby crying"],
     ["get an alert when the doorbell rings", "know when a baby is crying or someone is knocking"]),
    ("access.live_caption", ["Accessibility", "Hearing enhancements", "Live caption"],
     "Automatically caption speech in videos and calls",
     ["Live caption shows subtitles for audio playing on your phone, helpful if you are deaf or hard of hearing."],
     ["subtitles, captions"],
     ["show subtitles for audio playing on my phone", "see speech as subtitles because I am deaf"]),
    ("access.magnification", ["Accessibility", "Visibility enhancements", "Magnification"],
     "Triple tap the screen to zoom in",
     ["Use a magnifier window to temporarily enlarge part of the screen."],
     ["magnifier, triple tap"],
     ["use a magnifier window", "temporarily enlarge part of what I see with a triple tap"]),
    ("access.talkback", ["Accessibility", "TalkBack"],
     "Get spoken feedback so you can use your phone without looking at the screen",
     ["The screen reader speaks aloud what you touch and select, designed for blind and low vision users."],
     ["screen reader, voice feedback"],
     ["have the phone read aloud what I touch", "use a screen reader because I am blind"]),
    ("access.color_correction", ["Accessibility", "Visibility enhancements", "Color correction"],
     "Adjust how colors are displayed if you have difficulty seeing colors",
     ["Helps people with color blindness tell red and green apart."],
     ["color blind, colour filter"],
     ["tell red and green apart", "fix colors because I am color blind"]),
    ("connections.wifi", ["Connections", "Wi-Fi"],
     "Connect to Wi-Fi networks",
     ["Join a wireless network at home or in a cafe to browse the internet without using mobile data."],
     ["wireless network, wlan"],
     ["join a wireless network in a cafe", "browse at home without using mobile data"]),
    ("connections.bluetooth", ["Connections", "Bluetooth"],
     "Connect to nearby Bluetooth devices",
     ["Pair wireless earbuds, headphones, speakers, or a car kit."],
     ["pair earbuds, headset"],
     ["pair my wireless earbuds", "pair headphones or a speaker"]),
    ("connections.hotspot", ["Connections", "Mobile Hotspot and Tethering", "Mobile Hotspot"],
     "Share your mobile data connection with other devices",
     ["Let a laptop or tablet use your phone's internet connection over Wi-Fi."],
     ["share internet, hotspot, tethering"],
     ["share internet through my phone", "let my laptop use my internet over wifi"]),
    ("connections.usb_tethering", ["Connections", "Mobile Hotspot and Tethering", "USB tethering"],
     "Share your phone's internet connection through a USB cable",
     ["Connect your computer with a cable to go online using mobile data."],
     ["cable internet, tethering"],
     ["get my computer online with a cable", "go online from a pc over a cable"]),
    ("connections.airplane_mode", ["Connections", "Airplane mode"],
     "Turn off calling, messaging, and mobile data",
     ["Disable all wireless radios during a flight."],
     ["flight mode, offline"],
     ["disable all radios during a flight", "go offline on a flight"]),
    ("connections.mobile_data", ["Connections", "Data usage", "Mobile data"],
     "Turn mobile data on or off and check how much data you have used",
     ["Monitor cellular data consumption to avoid going over your monthly plan."],
     ["cellular data, data limit"],
     ["monitor cellular consumption", "avoid going over my monthly plan"]),
    ("connections.nfc", ["Connections", "NFC and contactless payments"],
     "Make mobile payments and share data with NFC",
     ["Tap your phone on a card reader to pay in shops."],
     ["tap to pay, contactless"],
     ["pay in shops by tapping a card reader", "tap to pay at the card reader"]),
    ("battery.usage", ["Battery and device care", "Battery", "Battery usage"],
     "Check the remaining battery level and which apps use the most power",
     ["See battery percentage and estimated time until the battery runs out."],
     ["battery percentage, power usage"],
     ["check the remaining battery level", "see which apps use the most power"]),
    ("battery.power_saving", ["Battery and device care", "Battery", "Power saving"],
     "Extend battery life by limiting background activity",
     ["Power saving mode reduces performance and turns off features to make the charge last longer."],
     ["battery saver, low power"],
     ["make the charge last longer", "reduce performance to extend battery life"]),
    ("battery.fast_charging", ["Battery and device care", "Battery", "More battery settings", "Fast charging"],
     "Charge your battery more quickly",
     ["Use a compatible charger to fill up the battery in less time."],
     ["quick charge, charger"],
     ["fill up the battery in less time", "charge more quickly with a compatible charger"]),
    ("care.storage", ["Battery and device care", "Storage"],
     "See how much storage space is used and free up space",
     ["Delete large files, duplicate photos, and unused apps when memory is full."],
     ["free space, memory full"],
     ["delete large files because memory is full", "remove duplicate photos and unused apps"]),
    ("care.auto_restart", ["Battery and device care", "Automation", "Auto restart"],
     "Restart your phone automatically at set times to keep it running smoothly",
     ["A scheduled reboot clears memory so the device stays fast."],
     ["scheduled reboot, restart"],
     ["schedule a reboot every night", "keep the device fast by rebooting on a schedule"]),
    ("lock.screen_lock_type", ["Lock screen", "Screen lock type"],
     "Choose how to unlock your phone with a pattern, PIN, or password",
     ["Protect your phone so others cannot open it without your code."],
     ["pin, password, pattern"],
     ["stop others opening my phone without a code", "set a pin code or pattern"]),
    ("security.fingerprints", ["Biometrics and security", "Fingerprints"],
     "Register fingerprints to unlock your phone",
     ["Unlock the device by placing your finger on the sensor under the screen."],
     ["finger scanner, biometrics"],
     ["unlock by placing my finger on the sensor", "register my thumb to open the device"]),
    ("security.face_recognition", ["Biometrics and security", "Face recognition"],
     "Unlock your phone by looking at it",
     ["The front camera recognizes your face to open the phone."],
     ["face unlock, face id"],
     ["open the phone by looking at the front camera", "let the camera recognize my face"]),
    ("security.find_my_mobile", ["Biometrics and security", "Find My Mobile"],
     "Locate, lock, or erase your phone remotely",
     ["If your phone is lost or stolen, track its location on a map from a computer."],
     ["lost phone, track location"],
     ["track my lost phone on a map", "locate my stolen phone from a computer"]),
    ("notifications.do_not_disturb", ["Notifications", "Do not disturb"],
     "Mute calls and notifications except for the ones you allow",
     ["Silence interruptions during meetings or while you sleep."],
     ["silent mode, mute"],
     ["silence interruptions while I sleep", "stop interruptions during meetings"]),
    ("general.language", ["General management", "Language"],
     "Change the language used on your phone",
     ["Switch menus and system text to Korean, Spanish, or another language."],
     ["korean, spanish"],
     ["switch the menus to korean", "show the system text in spanish"]),
    ("general.date_time", ["General management", "Date and time"],
     "Set the date, time, and time zone",
     ["Fix the clock when it shows the wrong hour after traveling abroad."],
     ["clock, time zone"],
     ["fix the clock showing the wrong hour", "correct the clock after traveling abroad"]),
    ("general.factory_reset", ["General management", "Reset", "Factory data reset"],
     "Erase all data and return your phone to its factory settings",
     ["Wipe everything before selling or giving away your device."],
     ["wipe phone, erase everything"],
     ["wipe everything before selling my device", "wipe the device before giving it away"]),
]

# Additional manual-style descriptions, appended after the ones above.
EXTRA_DESCRIPTIONS = {
    "display.brightness": ["Use this when the display is too bright or too dark to see comfortably."],
    "display.adaptive_brightness": ["Your phone learns your preferred light level and makes the display brighter outdoors and darker indoors on its own."],
    "display.eye_comfort": ["Reduces blue light and adds a warmer yellow tint to the colors to help you sleep and avoid tired eyes."],
    "display.dark_mode": ["Black menus are gentler on your eyes and turn the white theme of apps into a dark one."],
    "display.font_size": ["If the letters are too small to read, drag the slider to make the words larger."],
    "display.screen_zoom": ["Enlarge everything on the display, including icons, menus, and buttons, so they are larger and easier to tap."],
    "display.screen_timeout": ["Stop the display from going dark too quickly by choosing a longer delay such as 5 or 10 minutes."],
    "display.touch": ["If the screen does not respond well to your finger after covering it with a protector, this makes touch more responsive."],
    "display.motion_smoothness": ["A high refresh rate makes scrolling and animations look fluid, while 60 hz saves battery."],
    "sounds.notification_sound": ["Change the tone that plays for app notifications and incoming messages, or choose silent."],
    "sounds.ringtone": ["Pick a song or melody for incoming calls, or use your own music file as the ringtone."],
    "sounds.volume": ["Use the sliders to make the ringer, music, videos, and alerts louder or quieter."],
    "sounds.adapt_sound": ["Tune the audio to your hearing by taking a hearing test with earphones, so each ear gets customized sound."],
    "sounds.vibration_pattern": ["Pick a different buzz rhythm for calls and notifications so you can feel who is calling."],
    "sounds.touch_feedback": ["Control the clicks of the keyboard and the small vibrations you feel on each tap."],
    "access.sound_notifications": ["Your phone will alert you when it hears a doorbell ringing, a baby crying, or someone knocking at the door."],
    "access.live_caption": ["Turn speech in videos, podcasts, and calls into subtitles that appear on the display, useful for deaf users."],
    "access.magnification": ["Triple tap to temporarily enlarge part of the display with a magnifier window."],
    "access.talkback": ["A screen reader for blind users that reads aloud what you touch, so you can use the phone without seeing it."],
    "access.color_correction": ["If you are color blind, adjust colors so that red and green or blue and yellow are easier to tell apart."],
    "connections.wifi": ["Join a wireless network at home, at work, or in a cafe so you can browse without using mobile data."],
    "connections.bluetooth": ["Pair and connect wireless headphones, earbuds, a speaker, a watch, or your car."],
    "connections.hotspot": ["Share your internet with friends or let your laptop go online through your phone over wifi."],
    "connections.usb_tethering": ["Plug your phone into a computer or pc with a cable to share its internet connection."],
    "connections.airplane_mode": ["Go offline and disable all radios on a flight, or to stop all calls and messages."],
    "connections.mobile_data": ["Check how much cellular data you have used this month and set a limit so you avoid going over your plan."],
    "connections.nfc": ["Tap to pay at a card reader in shops with your phone instead of a card."],
    "battery.usage": ["Check how much battery is remaining and which apps use the most power."],
    "battery.power_saving": ["Limit performance and background apps to make the battery charge last longer."],
    "battery.fast_charging": ["Charge your phone more quickly with a compatible charger so the battery fills up in less time."],
    "care.storage": ["Free up memory by deleting large files, unused apps, and duplicate photos when your storage is full."],
    "care.auto_restart": ["Reboot your device automatically on a schedule, for example every night, to keep it fast."],
    "lock.screen_lock_type": ["Set a pin code, pattern, or password so no one else can open your phone."],
    "security.fingerprints": ["Register your finger or thumb and place it on the sensor to unlock the device."],
    "security.face_recognition": ["Look at the front camera to unlock; the camera recognizes your face."],
    "security.find_my_mobile": ["Locate a lost or stolen phone on a map, then lock or erase it from a computer."],
    "notifications.do_not_disturb": ["Silence calls, alerts, and other interruptions while you sleep or during meetings."],
    "general.language": ["Show the menus and system text in Korean, Spanish, English, or another language."],
    "general.date_time": ["Correct the clock if it shows the wrong hour, for example after traveling abroad to another time zone."],
    "general.factory_reset": ["Wipe all data from the device before selling it or giving it away."],
}

# Multi-gold relaxed queries (keyword-level, spanning related features).
EXTRA_RELAXED = [
    ("tethering", ["connections.hotspot", "connections.usb_tethering"]),
    ("sound notification", ["access.sound_notifications", "sounds.notification_sound"]),
    ("screen light", ["display.brightness", "display.adaptive_brightness", "display.eye_comfort"]),
    ("unlock", ["lock.screen_lock_type", "security.fingerprints", "security.face_recognition"]),
]

TEMPLATES = [
    "how to {}",
    "i want to {}",
    "how can i {}",
    "is there a way to {}",
]


def main() -> None:
    assert len(FEATURES) == 40, len(FEATURES)
    entries = []
    exact, relaxed, sentence = [], [], []
    t = 0
    for fid, path, hint, descs, relax, intents in FEATURES:
        descs = descs + EXTRA_DESCRIPTIONS.get(fid, [])
        entries.append({"id": fid, "path": path, "hint": hint, "descriptions": descs})
        exact.append({"text": path[-1], "kind": "exact_keyword", "gold_ids": [fid]})
        for r in relax:
            relaxed.append({"text": r, "kind": "relaxed_keyword", "gold_ids": [fid]})
        for intent in intents:
            sentence.append({"text": TEMPLATES[t % len(TEMPLATES)].format(intent),
                             "kind": "sentence", "gold_ids": [fid]})
            t += 1
    for text, gold in EXTRA_RELAXED:
        relaxed.append({"text": text, "kind": "relaxed_keyword", "gold_ids": sorted(gold)})

    catalog = {"version": "desk-1", "entries": entries}
    (DATA / "catalog.json").write_text(json.dumps(catalog, indent=2, ensure_ascii=False) + "\n",
                                       encoding="utf-8")
    for name, rows in [("queries_exact.jsonl", exact), ("queries_relaxed.jsonl", relaxed),
                       ("queries_sentence.jsonl", sentence)]:
        with (DATA / name).open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(f"wrote {len(entries)} entries, {len(exact)} exact, {len(relaxed)} relaxed, "
          f"{len(sentence)} sentence queries to {DATA}")


if __name__ == "__main__":
    main()
